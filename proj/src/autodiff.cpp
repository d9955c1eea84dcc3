#include <seqprior/autodiff.hpp>

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace seqprior::ad {

namespace {

bool any_grad(Var a) { return a.needs_grad(); }
bool any_grad(Var a, Var b) { return a.needs_grad() || b.needs_grad(); }

void require_same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw std::logic_error("autodiff: vars from different tapes");
}

void require_same_shape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string("autodiff ") + op + ": shape mismatch (" +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
}

constexpr double kSqrt2OverPi = 0.7978845608028654;

}  // namespace

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}, nullptr, nullptr});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(double value) { return constant(Matrix::Constant(1, 1, value)); }

Var Tape::param(Param& p, bool trainable) {
  nodes_.push_back(Node{{}, {}, trainable, {}, trainable ? &p : nullptr, &p.value});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::push(Matrix value, bool needs_grad, Backward back) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  if (needs_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw std::logic_error("backward: loss from another tape");
  if (loss.rows() != 1 || loss.cols() != 1) throw std::invalid_argument("backward: loss must be 1x1");
  if (!nodes_[loss.id].needs_grad) return;
  nodes_[loss.id].grad = Matrix::Ones(1, 1);
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    if (n.back) n.back(*this, id);
  }
  for (auto& n : nodes_) {
    if (n.param != nullptr && n.grad.size() != 0) n.param->grad += n.grad;
  }
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: inner dimensions differ (" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + ")");
  Matrix out(a.rows(), b.cols());
  out.noalias() = a.value() * b.value();
  const int ia = a.id, ib = b.id;
  return a.tape->push(std::move(out), any_grad(a, b), [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.needs_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Var add_bias(Var x, Var bias) {
  require_same_tape(x, bias);
  if (bias.rows() != 1 || bias.cols() != x.cols())
    throw std::invalid_argument("add_bias: bias must be 1 x cols");
  Matrix out = x.value();
  out.rowwise() += bias.value().row(0);
  const int ix = x.id, ib = bias.id;
  return x.tape->push(std::move(out), any_grad(x, bias), [ix, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    t.accumulate(ix, g);
    if (t.needs_grad(ib)) t.accumulate(ib, g.colwise().sum());
  });
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "add");
  const int ia = a.id, ib = b.id;
  return a.tape->push(a.value() + b.value(), any_grad(a, b), [ia, ib](Tape& t, int self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ib, t.grad(self));
  });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "sub");
  const int ia = a.id, ib = b.id;
  return a.tape->push(a.value() - b.value(), any_grad(a, b), [ia, ib](Tape& t, int self) {
    t.accumulate(ia, t.grad(self));
    if (t.needs_grad(ib)) t.accumulate(ib, -t.grad(self));
  });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "mul");
  const int ia = a.id, ib = b.id;
  return a.tape->push(a.value().cwiseProduct(b.value()), any_grad(a, b),
                      [ia, ib](Tape& t, int self) {
                        const Matrix& g = t.grad(self);
                        if (t.needs_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
                        if (t.needs_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
                      });
}

Var scale(Var a, double s) {
  const int ia = a.id;
  return a.tape->push(a.value() * s, any_grad(a),
                      [ia, s](Tape& t, int self) { t.accumulate(ia, t.grad(self) * s); });
}

Var add_scalar(Var a, double s) {
  const int ia = a.id;
  return a.tape->push(a.value().array() + s, any_grad(a),
                      [ia](Tape& t, int self) { t.accumulate(ia, t.grad(self)); });
}

Var min(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a, b, "min");
  const int ia = a.id, ib = b.id;
  return a.tape->push(a.value().cwiseMin(b.value()), any_grad(a, b), [ia, ib](Tape& t, int self) {
    const auto take_a = (t.value(ia).array() <= t.value(ib).array()).cast<double>();
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ia)) t.accumulate(ia, (g.array() * take_a).matrix());
    if (t.needs_grad(ib)) t.accumulate(ib, (g.array() * (1.0 - take_a)).matrix());
  });
}

Var relu(Var x) {
  const int ix = x.id;
  return x.tape->push(x.value().cwiseMax(0.0), any_grad(x), [ix](Tape& t, int self) {
    t.accumulate(ix, (t.grad(self).array() * (t.value(ix).array() > 0.0).cast<double>()).matrix());
  });
}

Var tanh(Var x) {
  const int ix = x.id;
  return x.tape->push(x.value().array().tanh().matrix(), any_grad(x), [ix](Tape& t, int self) {
    const auto y = t.value(self).array();
    t.accumulate(ix, (t.grad(self).array() * (1.0 - y * y)).matrix());
  });
}

Var exp(Var x) {
  const int ix = x.id;
  return x.tape->push(x.value().array().exp().matrix(), any_grad(x), [ix](Tape& t, int self) {
    t.accumulate(ix, t.grad(self).cwiseProduct(t.value(self)));
  });
}

Var log(Var x) {
  const int ix = x.id;
  return x.tape->push(x.value().array().log().matrix(), any_grad(x), [ix](Tape& t, int self) {
    t.accumulate(ix, (t.grad(self).array() / t.value(ix).array()).matrix());
  });
}

Var softplus(Var x) {
  const int ix = x.id;
  // log(1 + e^x) = max(x, 0) + log1p(e^-|x|)
  Matrix out = x.value().unaryExpr(
      [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); });
  return x.tape->push(std::move(out), any_grad(x), [ix](Tape& t, int self) {
    const Matrix sig = t.value(ix).unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    t.accumulate(ix, t.grad(self).cwiseProduct(sig));
  });
}

Var square(Var x) {
  const int ix = x.id;
  return x.tape->push(x.value().array().square().matrix(), any_grad(x), [ix](Tape& t, int self) {
    t.accumulate(ix, (2.0 * t.grad(self).array() * t.value(ix).array()).matrix());
  });
}

Var gelu(Var x) {
  const int ix = x.id;
  const auto& v = x.value().array();
  // tanh(z) = 1 - 2 / (exp(2z) + 1) uses the vectorized exp; clamp keeps exp finite
  const auto z2 = (2.0 * kSqrt2OverPi * (v + 0.044715 * v.cube())).min(40.0).max(-40.0);
  Matrix th = (1.0 - 2.0 / (z2.exp() + 1.0)).matrix();
  Matrix out = (0.5 * v * (1.0 + th.array())).matrix();
  if (!x.needs_grad()) return x.tape->push(std::move(out), false, nullptr);
  return x.tape->push(std::move(out), true, [ix, th = std::move(th)](Tape& t, int self) {
    const auto v = t.value(ix).array();
    const auto tt = th.array();
    const auto dinner = kSqrt2OverPi * (1.0 + 3.0 * 0.044715 * v.square());
    const Matrix d = (0.5 * (1.0 + tt) + 0.5 * v * (1.0 - tt.square()) * dinner).matrix();
    t.accumulate(ix, t.grad(self).cwiseProduct(d));
  });
}

Var clamp(Var x, double lo, double hi) {
  const int ix = x.id;
  return x.tape->push(x.value().cwiseMax(lo).cwiseMin(hi), any_grad(x),
                      [ix, lo, hi](Tape& t, int self) {
                        const auto v = t.value(ix).array();
                        const auto inside = ((v >= lo) && (v <= hi)).cast<double>();
                        t.accumulate(ix, (t.grad(self).array() * inside).matrix());
                      });
}

Var sum(Var x) {
  const int ix = x.id;
  return x.tape->push(Matrix::Constant(1, 1, x.value().sum()), any_grad(x),
                      [ix](Tape& t, int self) {
                        const double g = t.grad(self)(0, 0);
                        t.accumulate(ix, Matrix::Constant(t.value(ix).rows(), t.value(ix).cols(), g));
                      });
}

Var mean(Var x) {
  const double n = static_cast<double>(x.value().size());
  return scale(sum(x), 1.0 / n);
}

Var row_sum(Var x) {
  const int ix = x.id;
  Matrix out = x.value().rowwise().sum();
  return x.tape->push(std::move(out), any_grad(x), [ix](Tape& t, int self) {
    t.accumulate(ix, t.grad(self).replicate(1, t.value(ix).cols()));
  });
}

Var cols(Var x, Eigen::Index start, Eigen::Index n) {
  if (start < 0 || start + n > x.cols()) throw std::invalid_argument("cols: range out of bounds");
  const int ix = x.id;
  return x.tape->push(x.value().middleCols(start, n), any_grad(x), [ix, start, n](Tape& t, int self) {
    Matrix g = Matrix::Zero(t.value(ix).rows(), t.value(ix).cols());
    g.middleCols(start, n) = t.grad(self);
    t.accumulate(ix, g);
  });
}

Var rows(Var x, Eigen::Index start, Eigen::Index n) {
  if (start < 0 || start + n > x.rows()) throw std::invalid_argument("rows: range out of bounds");
  const int ix = x.id;
  return x.tape->push(x.value().middleRows(start, n), any_grad(x), [ix, start, n](Tape& t, int self) {
    Matrix g = Matrix::Zero(t.value(ix).rows(), t.value(ix).cols());
    g.middleRows(start, n) = t.grad(self);
    t.accumulate(ix, g);
  });
}

Var concat_cols(Var a, Var b) {
  require_same_tape(a, b);
  if (a.rows() != b.rows()) throw std::invalid_argument("concat_cols: row counts differ");
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  const int ia = a.id, ib = b.id;
  const Eigen::Index ca = a.cols(), cb = b.cols();
  return a.tape->push(std::move(out), any_grad(a, b), [ia, ib, ca, cb](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ia)) t.accumulate(ia, g.leftCols(ca));
    if (t.needs_grad(ib)) t.accumulate(ib, g.rightCols(cb));
  });
}

Var gather_rows(Var x, const std::vector<int>& index) {
  Matrix out(static_cast<Eigen::Index>(index.size()), x.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= x.rows()) throw std::invalid_argument("gather_rows: bad index");
    out.row(static_cast<Eigen::Index>(i)) = x.value().row(index[i]);
  }
  const int ix = x.id;
  return x.tape->push(std::move(out), any_grad(x), [ix, index](Tape& t, int self) {
    Matrix g = Matrix::Zero(t.value(ix).rows(), t.value(ix).cols());
    const Matrix& go = t.grad(self);
    for (std::size_t i = 0; i < index.size(); ++i) g.row(index[i]) += go.row(static_cast<Eigen::Index>(i));
    t.accumulate(ix, g);
  });
}

Var add_tiled(Var x, Var table, Eigen::Index period) {
  require_same_tape(x, table);
  if (period <= 0 || x.rows() % period != 0 || table.rows() < period || table.cols() != x.cols())
    throw std::invalid_argument("add_tiled: incompatible shapes");
  Matrix out = x.value();
  const Eigen::Index blocks = x.rows() / period;
  for (Eigen::Index b = 0; b < blocks; ++b) out.middleRows(b * period, period) += table.value().topRows(period);
  const int ix = x.id, it = table.id;
  return x.tape->push(std::move(out), any_grad(x, table), [ix, it, period, blocks](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    t.accumulate(ix, g);
    if (t.needs_grad(it)) {
      Matrix gt = Matrix::Zero(t.value(it).rows(), t.value(it).cols());
      for (Eigen::Index b = 0; b < blocks; ++b) gt.topRows(period) += g.middleRows(b * period, period);
      t.accumulate(it, gt);
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  require_same_tape(x, gain);
  const Eigen::Index n = x.rows(), c = x.cols();
  if (gain.rows() != 1 || gain.cols() != c || bias.rows() != 1 || bias.cols() != c)
    throw std::invalid_argument("layer_norm: gain/bias must be 1 x cols");
  Matrix xhat(n, c);
  Vector rstd(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mu = x.value().row(r).mean();
    const double var = (x.value().row(r).array() - mu).square().mean();
    rstd(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (x.value().row(r).array() - mu) * rstd(r);
  }
  Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
  out.rowwise() += bias.value().row(0);
  const int ix = x.id, ig = gain.id, ib = bias.id;
  const bool ng = x.needs_grad() || gain.needs_grad() || bias.needs_grad();
  return x.tape->push(std::move(out), ng,
                      [ix, ig, ib, xhat = std::move(xhat), rstd = std::move(rstd)](Tape& t, int self) {
                        const Matrix& g = t.grad(self);
                        if (t.needs_grad(ig)) t.accumulate(ig, g.cwiseProduct(xhat).colwise().sum());
                        if (t.needs_grad(ib)) t.accumulate(ib, g.colwise().sum());
                        if (t.needs_grad(ix)) {
                          const Matrix dxhat = (g.array().rowwise() * t.value(ig).row(0).array()).matrix();
                          Matrix dx(g.rows(), g.cols());
                          for (Eigen::Index r = 0; r < g.rows(); ++r) {
                            const double m1 = dxhat.row(r).mean();
                            const double m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
                            dx.row(r) = rstd(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
                          }
                          t.accumulate(ix, dx);
                        }
                      });
}

Var causal_attention(Var qkv, Eigen::Index batch, Eigen::Index seq_len, int heads) {
  if (qkv.rows() != batch * seq_len || qkv.cols() % 3 != 0)
    throw std::invalid_argument("causal_attention: qkv must be (batch*seq_len) x 3*width");
  const Eigen::Index width = qkv.cols() / 3;
  if (heads <= 0 || width % heads != 0)
    throw std::invalid_argument("causal_attention: width not divisible by heads");
  const Eigen::Index hd = width / heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(hd));
  const Matrix& in = qkv.value();

  Matrix out = Matrix::Zero(batch * seq_len, width);
  // attention probabilities per (sequence, head), kept for the reverse sweep
  std::vector<Matrix> probs(static_cast<std::size_t>(batch * heads));
  for (Eigen::Index b = 0; b < batch; ++b) {
    const Eigen::Index r0 = b * seq_len;
    for (int h = 0; h < heads; ++h) {
      const auto q = in.block(r0, h * hd, seq_len, hd);
      const auto k = in.block(r0, width + h * hd, seq_len, hd);
      const auto v = in.block(r0, 2 * width + h * hd, seq_len, hd);
      Matrix s = (q * k.transpose()) * inv_scale;
      for (Eigen::Index i = 0; i < seq_len; ++i) {
        const double mx = s.row(i).head(i + 1).maxCoeff();
        double z = 0.0;
        for (Eigen::Index j = 0; j <= i; ++j) {
          s(i, j) = std::exp(s(i, j) - mx);
          z += s(i, j);
        }
        for (Eigen::Index j = 0; j <= i; ++j) s(i, j) /= z;
        for (Eigen::Index j = i + 1; j < seq_len; ++j) s(i, j) = 0.0;
      }
      out.block(r0, h * hd, seq_len, hd).noalias() = s * v;
      probs[static_cast<std::size_t>(b * heads + h)] = std::move(s);
    }
  }
  const int iq = qkv.id;
  return qkv.tape->push(
      std::move(out), any_grad(qkv),
      [iq, batch, seq_len, heads, width, hd, inv_scale, probs = std::move(probs)](Tape& t, int self) {
        const Matrix& g = t.grad(self);
        const Matrix& in = t.value(iq);
        Matrix dqkv = Matrix::Zero(in.rows(), in.cols());
        for (Eigen::Index b = 0; b < batch; ++b) {
          const Eigen::Index r0 = b * seq_len;
          for (int h = 0; h < heads; ++h) {
            const Matrix& p = probs[static_cast<std::size_t>(b * heads + h)];
            const auto q = in.block(r0, h * hd, seq_len, hd);
            const auto k = in.block(r0, width + h * hd, seq_len, hd);
            const auto v = in.block(r0, 2 * width + h * hd, seq_len, hd);
            const auto go = g.block(r0, h * hd, seq_len, hd);
            dqkv.block(r0, 2 * width + h * hd, seq_len, hd).noalias() += p.transpose() * go;
            const Matrix dp = go * v.transpose();
            const Vector rowdot = dp.cwiseProduct(p).rowwise().sum();
            const Matrix ds = (p.array() * (dp.colwise() - rowdot).array()).matrix() * inv_scale;
            dqkv.block(r0, h * hd, seq_len, hd).noalias() += ds * k;
            dqkv.block(r0, width + h * hd, seq_len, hd).noalias() += ds.transpose() * q;
          }
        }
        t.accumulate(iq, dqkv);
      });
}

Var dropout(Var x, double p, std::mt19937_64& rng) {
  if (p <= 0.0) return x;
  if (p >= 1.0) throw std::invalid_argument("dropout: p must be < 1");
  std::bernoulli_distribution keep(1.0 - p);
  Matrix mask(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < mask.cols(); ++j)
    for (Eigen::Index i = 0; i < mask.rows(); ++i) mask(i, j) = keep(rng) ? 1.0 / (1.0 - p) : 0.0;
  Var m = x.tape->constant(std::move(mask));
  return mul(x, m);
}

}  // namespace seqprior::ad
