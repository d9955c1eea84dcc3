#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <seqprior/autodiff.hpp>
#include <seqprior/errors.hpp>

namespace seqprior {

inline constexpr double kLog2 = 0.6931471805599453;
inline constexpr double kHalfLog2Pi = 0.9189385332046727;
inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;

/// Ordered collection of parameters. Indices are stable for the store's lifetime.
class ParamStore {
 public:
  int add(std::string name, Matrix value);

  Param& operator[](int i) { return params_[static_cast<std::size_t>(i)]; }
  const Param& operator[](int i) const { return params_[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  const Param* find(const std::string& name) const;
  Param* find(const std::string& name);

  void zero_grad();
  std::size_t num_scalars() const;

  std::int64_t step = 0;

 private:
  std::vector<Param> params_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam step. Throws NumericalError naming the first parameter
/// with a non-finite gradient; in that case nothing is modified.
void adam_step(ParamStore& store, const AdamConfig& cfg);

/// target <- (1 - rho) * target + rho * online, elementwise over matching stores.
void soft_update(ParamStore& target, const ParamStore& online, double rho);

/// Copies values (not optimizer state) from `src` into `dst`.
void copy_values(ParamStore& dst, const ParamStore& src);

// --------------------------------------------------------------------------
// Squashed Gaussian utilities

/// Sum over columns of log(1 - tanh(u)^2), computed as 2 (log 2 - u - softplus(-2u)).
template <class Derived>
Vector tanh_log_det(const Eigen::MatrixBase<Derived>& u) {
  return u.unaryExpr([](double v) {
            const double x = -2.0 * v;
            const double sp = std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
            return 2.0 * (kLog2 - v - sp);
          })
      .rowwise()
      .sum();
}

/// Log-likelihood of a = tanh(u) given the Gaussian log-likelihood of u (per row).
template <class Derived>
Vector tanh_logprob(const Eigen::MatrixBase<Derived>& u, const Vector& gaussian_logprob) {
  return gaussian_logprob - tanh_log_det(u);
}

inline double tanh_logprob(double u, double gaussian_logprob) {
  Matrix m(1, 1);
  m(0, 0) = u;
  return tanh_logprob(m, Vector::Constant(1, gaussian_logprob))(0);
}

namespace ad {
/// Per-row sum of log(1 - tanh(u)^2) on the tape.
Var tanh_log_det(Var u);
/// Per-row diagonal Gaussian log density of `u` under (mean, log_std).
Var gaussian_logprob(Var u, Var mean, Var log_std);
}  // namespace ad

/// Mean and clamped log-std of a diagonal Gaussian, one row per sample.
struct GaussianHead {
  ad::Var mean;
  ad::Var log_std;
};

/// Splits a (rows x 2D) network output into a head with log-std clamped to [-20, 2].
GaussianHead make_head(ad::Var raw, Eigen::Index action_dim);

struct SquashedSample {
  ad::Var action;    // tanh(u), rows x D
  ad::Var pre_tanh;  // u
  ad::Var logprob;   // rows x 1; invalid (tape == nullptr) for deterministic draws
};

/// Reparameterized draw a = tanh(mean + std * eps). Deterministic draws return tanh(mean).
SquashedSample sample_squashed(const GaussianHead& head, bool deterministic, std::mt19937_64& rng);

/// atanh with the argument pulled inside (-1, 1) so stored actions at the boundary stay finite.
Matrix safe_atanh(const Matrix& a);

// --------------------------------------------------------------------------
// Multilayer perceptron

struct Mlp {
  ParamStore store;
  std::vector<int> weights;
  std::vector<int> biases;
  std::vector<int> sizes;

  Mlp() = default;
  /// sizes = {in, hidden..., out}; fan-in scaled uniform initialization.
  Mlp(const std::vector<int>& layer_sizes, std::mt19937_64& rng, const std::string& prefix = "");

  int input_dim() const { return sizes.front(); }
  int output_dim() const { return sizes.back(); }
};

/// ReLU MLP forward pass on the tape; `trainable` controls whether parameter gradients are kept.
ad::Var mlp_forward(ad::Tape& tape, Mlp& mlp, ad::Var input, bool trainable = true);

// --------------------------------------------------------------------------
// Causal transformer over continuous action tokens

struct TransformerConfig {
  int action_dim = 1;
  int width = 30;
  int heads = 5;
  int layers = 2;
  int max_context = 20;  // actions; one extra position holds the start token
  double dropout = 0.1;
};

struct Transformer {
  TransformerConfig cfg;
  ParamStore store;

  Transformer() = default;
  Transformer(const TransformerConfig& cfg, std::mt19937_64& rng);
};

/// A batch of action contexts (rows = time, oldest first). Each is truncated to the
/// most recent `max_context` actions and prefixed with the start token.
struct TransformerOutput {
  GaussianHead head;                    // (batch * seq_len) rows, one per position
  Eigen::Index seq_len = 0;             // padded token count per sequence
  std::vector<int> lengths;             // real token count per sequence (context + start)
  std::vector<Matrix> contexts;         // truncated contexts actually used
  bool last_only = false;               // head holds only the final position of each sequence

  /// Row of the head predicting the action that follows sequence b's context.
  int last_row(std::size_t b) const {
    return last_only ? static_cast<int>(b) : static_cast<int>(b * seq_len) + lengths[b] - 1;
  }
};

/// Forward pass. With `rng` non-null and dropout > 0 the pass runs in training mode.
/// `last_only` skips the final block's per-position work for everything but the last
/// real position of each sequence (all that scoring needs).
TransformerOutput transformer_forward(ad::Tape& tape, Transformer& model,
                                      const std::vector<Matrix>& contexts, bool trainable = true,
                                      std::mt19937_64* rng = nullptr, bool last_only = false);

/// Linear warmup to the base rate over `warmup` tokens, then linear decay to
/// `floor_fraction` of it at `total` tokens.
double warmup_linear_decay(double base_lr, double tokens, double warmup, double total,
                           double floor_fraction = 0.1);

}  // namespace seqprior
