#include <seqprior/priors.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace seqprior {

std::string to_string(PriorKind kind) {
  switch (kind) {
    case PriorKind::kUniform: return "uniform";
    case PriorKind::kGaussian: return "gaussian-learned";
    case PriorKind::kTransformer: return "transformer";
    case PriorKind::kLz: return "lz";
  }
  return "unknown";
}

PriorKind parse_prior_kind(const std::string& name) {
  if (name == "uniform") return PriorKind::kUniform;
  if (name == "gaussian-learned" || name == "gaussian") return PriorKind::kGaussian;
  if (name == "transformer") return PriorKind::kTransformer;
  if (name == "lz") return PriorKind::kLz;
  throw ConfigError("unknown prior kind '" + name + "'");
}

double uniform_logprob(const Vector& action) { return -static_cast<double>(action.size()) * kLog2; }

GaussianPrior::GaussianPrior(int action_dim) {
  if (action_dim < 1) throw ConfigError("gaussian prior needs action_dim >= 1");
  mean = store.add("mean", Matrix::Zero(1, action_dim));
  log_std = store.add("log_std", Matrix::Zero(1, action_dim));
}

ad::Var gaussian_prior_logprob(ad::Tape& tape, GaussianPrior& prior, ad::Var pre_tanh, bool trainable) {
  const Eigen::Index n = pre_tanh.rows();
  ad::Var zeros = tape.constant(Matrix::Zero(n, prior.dim()));
  ad::Var mean = ad::add_bias(zeros, tape.param(prior.store[prior.mean], trainable));
  ad::Var log_std = ad::clamp(ad::add_bias(zeros, tape.param(prior.store[prior.log_std], trainable)),
                              kLogStdMin, kLogStdMax);
  return ad::sub(ad::gaussian_logprob(pre_tanh, mean, log_std), ad::tanh_log_det(pre_tanh));
}

double gaussian_prior_logprob(GaussianPrior& prior, const Vector& action) {
  ad::Tape tape;
  ad::Var u = tape.constant(safe_atanh(action.transpose()));
  return gaussian_prior_logprob(tape, prior, u, false).scalar();
}

Vector gaussian_prior_sample(const GaussianPrior& prior, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto& mu = prior.store[prior.mean].value;
  const auto& ls = prior.store[prior.log_std].value;
  Vector a(mu.cols());
  for (Eigen::Index d = 0; d < a.size(); ++d) {
    const double sd = std::exp(std::clamp(ls(0, d), kLogStdMin, kLogStdMax));
    a(d) = std::tanh(mu(0, d) + sd * normal(rng));
  }
  return a;
}

ad::Var transformer_logprob(ad::Tape& tape, Transformer& model, const std::vector<Matrix>& contexts,
                            ad::Var pre_tanh, bool trainable) {
  if (static_cast<std::size_t>(pre_tanh.rows()) != contexts.size())
    throw ConfigError("transformer_logprob: one scored action per context required");
  auto out = transformer_forward(tape, model, contexts, trainable, nullptr, true);
  std::vector<int> last(contexts.size());
  for (std::size_t b = 0; b < contexts.size(); ++b) last[b] = out.last_row(b);
  ad::Var mean = ad::gather_rows(out.head.mean, last);
  ad::Var log_std = ad::gather_rows(out.head.log_std, last);
  return ad::sub(ad::gaussian_logprob(pre_tanh, mean, log_std), ad::tanh_log_det(pre_tanh));
}

double transformer_logprob(Transformer& model, const Matrix& context, const Vector& action) {
  ad::Tape tape;
  ad::Var u = tape.constant(safe_atanh(action.transpose()));
  return transformer_logprob(tape, model, {context}, u, false).scalar();
}

Vector transformer_sample(Transformer& model, const Matrix& context, std::mt19937_64& rng,
                          bool deterministic) {
  ad::Tape tape;
  auto out = transformer_forward(tape, model, {context}, false, nullptr, true);
  const int row = out.last_row(0);
  GaussianHead head{ad::rows(out.head.mean, row, 1), ad::rows(out.head.log_std, row, 1)};
  auto s = sample_squashed(head, deterministic, rng);
  return s.action.value().row(0).transpose();
}

Matrix lz_prior_grid(int action_dim, int grid) {
  if (grid < 2) throw ConfigError("lz prior grid needs at least 2 points per dimension");
  const auto total = static_cast<Eigen::Index>(std::pow(grid, action_dim));
  Matrix points(total, action_dim);
  for (Eigen::Index i = 0; i < total; ++i) {
    Eigen::Index rest = i;
    for (int d = 0; d < action_dim; ++d) {
      const auto k = rest % grid;
      rest /= grid;
      points(i, d) = -1.0 + 2.0 * static_cast<double>(k) / (grid - 1);
    }
  }
  return points;
}

Vector lz_prior_probabilities(const Matrix& context, const LzPriorOptions& opts) {
  if (context.rows() == 0) throw PreconditionError("lz prior needs a non-empty context");
  const int dim = static_cast<int>(context.cols());
  const double candidates = std::pow(static_cast<double>(opts.grid), dim);
  if (candidates > static_cast<double>(opts.max_candidates))
    throw ConfigError("lz prior grid has " + std::to_string(static_cast<long long>(candidates)) +
                      " candidates (limit " + std::to_string(opts.max_candidates) +
                      "); sample each action dimension separately instead");
  if (opts.temperature < 0.0) throw ConfigError("lz prior temperature must be >= 0");
  const Matrix grid = lz_prior_grid(dim, opts.grid);

  // the context's own encoding is shared by every candidate
  const double base = static_cast<double>(encoded_length(context, opts.granularity, opts.lz));
  Matrix extended(context.rows() + 1, dim);
  extended.topRows(context.rows()) = context;
  Vector deltas(grid.rows());
  for (Eigen::Index i = 0; i < grid.rows(); ++i) {
    extended.row(context.rows()) = grid.row(i);
    deltas(i) = base - static_cast<double>(encoded_length(extended, opts.granularity, opts.lz));
  }
  const double best = deltas.maxCoeff();
  Vector p(grid.rows());
  if (opts.temperature == 0.0) {
    p = (deltas.array() == best).cast<double>();
  } else {
    p = ((deltas.array() - best) / opts.temperature).exp();
  }
  return p / p.sum();
}

Vector lz_prior_sample(const Matrix& context, const LzPriorOptions& opts, std::mt19937_64& rng) {
  const Vector p = lz_prior_probabilities(context, opts);
  std::discrete_distribution<Eigen::Index> pick(p.data(), p.data() + p.size());
  const Matrix grid = lz_prior_grid(static_cast<int>(context.cols()), opts.grid);
  return grid.row(pick(rng)).transpose();
}

}  // namespace seqprior
