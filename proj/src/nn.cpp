#include <seqprior/nn.hpp>

#include <algorithm>
#include <cmath>

namespace seqprior {

int ParamStore::add(std::string name, Matrix value) {
  if (find(name) != nullptr) throw ConfigError("duplicate parameter name: " + name);
  params_.emplace_back(std::move(name), std::move(value));
  return static_cast<int>(params_.size()) - 1;
}

const Param* ParamStore::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

Param* ParamStore::find(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.grad.setZero();
}

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void adam_step(ParamStore& store, const AdamConfig& cfg) {
  for (const auto& p : store)
    if (!p.grad.allFinite()) throw NumericalError("non-finite gradient in parameter '" + p.name + "'");
  ++store.step;
  const double t = static_cast<double>(store.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& p : store) {
    p.adam_m = cfg.beta1 * p.adam_m + (1.0 - cfg.beta1) * p.grad;
    p.adam_v = cfg.beta2 * p.adam_v + (1.0 - cfg.beta2) * p.grad.cwiseAbs2();
    p.value.array() -= cfg.lr * (p.adam_m.array() / c1) / ((p.adam_v.array() / c2).sqrt() + cfg.eps);
  }
}

namespace {
void require_matching(const ParamStore& a, const ParamStore& b) {
  if (a.size() != b.size()) throw ConfigError("parameter stores differ in size");
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& pa = a[static_cast<int>(i)];
    const auto& pb = b[static_cast<int>(i)];
    if (pa.value.rows() != pb.value.rows() || pa.value.cols() != pb.value.cols())
      throw ConfigError("shape mismatch for parameter '" + pa.name + "'");
  }
}
}  // namespace

void soft_update(ParamStore& target, const ParamStore& online, double rho) {
  require_matching(target, online);
  for (std::size_t i = 0; i < target.size(); ++i) {
    auto& t = target[static_cast<int>(i)].value;
    t = (1.0 - rho) * t + rho * online[static_cast<int>(i)].value;
  }
}

void copy_values(ParamStore& dst, const ParamStore& src) {
  require_matching(dst, src);
  for (std::size_t i = 0; i < dst.size(); ++i) dst[static_cast<int>(i)].value = src[static_cast<int>(i)].value;
}

namespace ad {

Var tanh_log_det(Var u) {
  Var sp = softplus(scale(u, -2.0));
  return row_sum(add_scalar(scale(add(u, sp), -2.0), 2.0 * kLog2));
}

Var gaussian_logprob(Var u, Var mean, Var log_std) {
  Var z = mul(sub(u, mean), exp(scale(log_std, -1.0)));
  Var per_dim = sub(scale(square(z), -0.5), log_std);
  return add_scalar(row_sum(per_dim), -kHalfLog2Pi * static_cast<double>(u.cols()));
}

}  // namespace ad

GaussianHead make_head(ad::Var raw, Eigen::Index action_dim) {
  if (raw.cols() != 2 * action_dim) throw ConfigError("gaussian head expects 2*D outputs");
  return {ad::cols(raw, 0, action_dim), ad::clamp(ad::cols(raw, action_dim, action_dim), kLogStdMin, kLogStdMax)};
}

SquashedSample sample_squashed(const GaussianHead& head, bool deterministic, std::mt19937_64& rng) {
  ad::Tape& tape = *head.mean.tape;
  if (deterministic) return {ad::tanh(head.mean), head.mean, ad::Var{}};
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix eps(head.mean.rows(), head.mean.cols());
  for (Eigen::Index j = 0; j < eps.cols(); ++j)
    for (Eigen::Index i = 0; i < eps.rows(); ++i) eps(i, j) = normal(rng);
  ad::Var u = ad::add(head.mean, ad::mul(ad::exp(head.log_std), tape.constant(std::move(eps))));
  ad::Var logp = ad::sub(ad::gaussian_logprob(u, head.mean, head.log_std), ad::tanh_log_det(u));
  return {ad::tanh(u), u, logp};
}

Matrix safe_atanh(const Matrix& a) {
  static constexpr double kEdge = 1.0 - 1e-6;
  return a.unaryExpr([](double v) { return std::atanh(std::clamp(v, -kEdge, kEdge)); });
}

Mlp::Mlp(const std::vector<int>& layer_sizes, std::mt19937_64& rng, const std::string& prefix)
    : sizes(layer_sizes) {
  if (sizes.size() < 2) throw ConfigError("mlp needs at least input and output sizes");
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int fan_in = sizes[l], fan_out = sizes[l + 1];
    if (fan_in < 1 || fan_out < 1) throw ConfigError("mlp layer sizes must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> unif(-bound, bound);
    Matrix w(fan_in, fan_out), b(1, fan_out);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = unif(rng);
    for (Eigen::Index j = 0; j < b.cols(); ++j) b(0, j) = unif(rng);
    weights.push_back(store.add(prefix + "l" + std::to_string(l) + ".w", std::move(w)));
    biases.push_back(store.add(prefix + "l" + std::to_string(l) + ".b", std::move(b)));
  }
}

ad::Var mlp_forward(ad::Tape& tape, Mlp& mlp, ad::Var input, bool trainable) {
  if (input.cols() != mlp.input_dim())
    throw ConfigError("mlp input has " + std::to_string(input.cols()) + " columns, expected " +
                      std::to_string(mlp.input_dim()));
  ad::Var h = input;
  const std::size_t n = mlp.weights.size();
  for (std::size_t l = 0; l < n; ++l) {
    h = ad::add_bias(ad::matmul(h, tape.param(mlp.store[mlp.weights[l]], trainable)),
                     tape.param(mlp.store[mlp.biases[l]], trainable));
    if (l + 1 < n) h = ad::relu(h);
  }
  return h;
}

namespace {
Matrix normal_matrix(Eigen::Index r, Eigen::Index c, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  Matrix m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = normal(rng);
  return m;
}
}  // namespace

Transformer::Transformer(const TransformerConfig& c, std::mt19937_64& rng) : cfg(c) {
  if (cfg.width % cfg.heads != 0) throw ConfigError("transformer width must be divisible by heads");
  if (cfg.action_dim < 1 || cfg.layers < 1 || cfg.max_context < 1)
    throw ConfigError("transformer dimensions must be positive");
  const int w = cfg.width, d = cfg.action_dim;
  store.add("embed.w", normal_matrix(d, w, 0.02, rng));
  store.add("embed.b", Matrix::Zero(1, w));
  store.add("start", normal_matrix(1, w, 0.02, rng));
  store.add("pos", normal_matrix(cfg.max_context + 1, w, 0.02, rng));
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = "block" + std::to_string(l) + ".";
    store.add(p + "ln1.g", Matrix::Ones(1, w));
    store.add(p + "ln1.b", Matrix::Zero(1, w));
    store.add(p + "attn.w", normal_matrix(w, 3 * w, 0.02, rng));
    store.add(p + "attn.b", Matrix::Zero(1, 3 * w));
    store.add(p + "proj.w", normal_matrix(w, w, 0.02, rng));
    store.add(p + "proj.b", Matrix::Zero(1, w));
    store.add(p + "ln2.g", Matrix::Ones(1, w));
    store.add(p + "ln2.b", Matrix::Zero(1, w));
    store.add(p + "fc.w", normal_matrix(w, 4 * w, 0.02, rng));
    store.add(p + "fc.b", Matrix::Zero(1, 4 * w));
    store.add(p + "fcproj.w", normal_matrix(4 * w, w, 0.02, rng));
    store.add(p + "fcproj.b", Matrix::Zero(1, w));
  }
  store.add("lnf.g", Matrix::Ones(1, w));
  store.add("lnf.b", Matrix::Zero(1, w));
  store.add("head.w", normal_matrix(w, 2 * d, 0.02, rng));
  store.add("head.b", Matrix::Zero(1, 2 * d));
}

TransformerOutput transformer_forward(ad::Tape& tape, Transformer& model,
                                      const std::vector<Matrix>& contexts, bool trainable,
                                      std::mt19937_64* rng, bool last_only) {
  const auto& cfg = model.cfg;
  const int d = cfg.action_dim;
  if (contexts.empty()) throw PreconditionError("transformer_forward: empty batch");

  TransformerOutput out;
  out.lengths.reserve(contexts.size());
  Eigen::Index seq_len = 1;
  for (const auto& c : contexts) {
    if (c.rows() > 0 && c.cols() != d)
      throw ConfigError("transformer context has " + std::to_string(c.cols()) +
                        " action dims, expected " + std::to_string(d));
    const Eigen::Index keep = std::min<Eigen::Index>(c.rows(), cfg.max_context);
    out.contexts.push_back(c.bottomRows(keep));
    out.lengths.push_back(static_cast<int>(keep) + 1);
    seq_len = std::max<Eigen::Index>(seq_len, keep + 1);
  }
  out.seq_len = seq_len;
  const auto batch = static_cast<Eigen::Index>(contexts.size());

  // token rows: start marker at position 0, actions after, zero padding at the end
  Matrix actions = Matrix::Zero(batch * seq_len, d);
  Matrix is_start = Matrix::Zero(batch * seq_len, 1);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const auto& c = out.contexts[static_cast<std::size_t>(b)];
    is_start(b * seq_len, 0) = 1.0;
    if (c.rows() > 0) actions.middleRows(b * seq_len + 1, c.rows()) = c;
  }

  auto P = [&](const std::string& name) -> ad::Var {
    Param* p = model.store.find(name);
    return tape.param(*p, trainable);
  };
  const bool train_mode = rng != nullptr && cfg.dropout > 0.0;
  auto drop = [&](ad::Var v) { return train_mode ? ad::dropout(v, cfg.dropout, *rng) : v; };

  ad::Var x = ad::add_bias(ad::matmul(tape.constant(std::move(actions)), P("embed.w")), P("embed.b"));
  x = ad::add(x, ad::matmul(tape.constant(std::move(is_start)), P("start")));
  x = ad::add_tiled(x, P("pos"), seq_len);
  x = drop(x);
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = "block" + std::to_string(l) + ".";
    ad::Var h = ad::layer_norm(x, P(p + "ln1.g"), P(p + "ln1.b"));
    ad::Var qkv = ad::add_bias(ad::matmul(h, P(p + "attn.w")), P(p + "attn.b"));
    ad::Var att = ad::causal_attention(qkv, batch, seq_len, cfg.heads);
    if (last_only && l + 1 == cfg.layers) {
      std::vector<int> last(contexts.size());
      for (std::size_t b = 0; b < contexts.size(); ++b) last[b] = out.last_row(b);
      x = ad::gather_rows(x, last);
      att = ad::gather_rows(att, last);
      out.last_only = true;
    }
    x = ad::add(x, drop(ad::add_bias(ad::matmul(att, P(p + "proj.w")), P(p + "proj.b"))));
    h = ad::layer_norm(x, P(p + "ln2.g"), P(p + "ln2.b"));
    ad::Var m = ad::gelu(ad::add_bias(ad::matmul(h, P(p + "fc.w")), P(p + "fc.b")));
    x = ad::add(x, drop(ad::add_bias(ad::matmul(m, P(p + "fcproj.w")), P(p + "fcproj.b"))));
  }
  x = ad::layer_norm(x, P("lnf.g"), P("lnf.b"));
  ad::Var raw = ad::add_bias(ad::matmul(x, P("head.w")), P("head.b"));
  out.head = make_head(raw, d);
  return out;
}

double warmup_linear_decay(double base_lr, double tokens, double warmup, double total,
                           double floor_fraction) {
  if (tokens < warmup) return base_lr * std::max(tokens, 1.0) / warmup;
  if (total <= warmup) return base_lr;
  const double progress = std::clamp((tokens - warmup) / (total - warmup), 0.0, 1.0);
  return base_lr * std::max(floor_fraction, 1.0 - progress);
}

}  // namespace seqprior
