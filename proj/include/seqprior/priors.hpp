#pragma once

#include <random>
#include <string>
#include <vector>

#include <seqprior/compressor.hpp>
#include <seqprior/nn.hpp>

namespace seqprior {

enum class PriorKind { kUniform, kGaussian, kTransformer, kLz };

std::string to_string(PriorKind kind);
PriorKind parse_prior_kind(const std::string& name);

/// Density of the uniform distribution on (-1, 1)^D: -D log 2, independent of the action.
double uniform_logprob(const Vector& action);

/// State-independent isotropic Gaussian over pre-tanh actions with learnable mean and log-std.
struct GaussianPrior {
  ParamStore store;
  int mean = -1;
  int log_std = -1;

  GaussianPrior() = default;
  explicit GaussianPrior(int action_dim);
  int dim() const { return static_cast<int>(store[mean].value.cols()); }
};

/// Per-row log-likelihood of a = tanh(u) under the prior, including the tanh correction.
ad::Var gaussian_prior_logprob(ad::Tape& tape, GaussianPrior& prior, ad::Var pre_tanh,
                               bool trainable = true);
double gaussian_prior_logprob(GaussianPrior& prior, const Vector& action);
Vector gaussian_prior_sample(const GaussianPrior& prior, std::mt19937_64& rng);

/// log phi(a | context) from the final position of each context, one row per batch entry.
/// `pre_tanh` holds atanh of the scored actions (rows aligned with `contexts`).
ad::Var transformer_logprob(ad::Tape& tape, Transformer& model, const std::vector<Matrix>& contexts,
                            ad::Var pre_tanh, bool trainable = false);
double transformer_logprob(Transformer& model, const Matrix& context, const Vector& action);

Vector transformer_sample(Transformer& model, const Matrix& context, std::mt19937_64& rng,
                          bool deterministic = false);

struct LzPriorOptions {
  int grid = 9;
  double temperature = 1.0;
  int granularity = 100;
  LzParams lz;
  std::size_t max_candidates = 10000;
};

/// All K^D points of the uniform grid over [-1, 1]^D, one per row (first dimension fastest).
Matrix lz_prior_grid(int action_dim, int grid);

/// softmax(delta / temperature) over the grid candidates; temperature 0 puts equal mass
/// on the maximizers.
Vector lz_prior_probabilities(const Matrix& context, const LzPriorOptions& opts);

Vector lz_prior_sample(const Matrix& context, const LzPriorOptions& opts, std::mt19937_64& rng);

}  // namespace seqprior
