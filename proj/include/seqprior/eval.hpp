#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <seqprior/agent.hpp>
#include <seqprior/envs.hpp>
#include <seqprior/priors.hpp>

namespace seqprior {

/// Linear-interpolation percentile, q in [0, 100]. Empty input gives NaN.
double percentile(std::vector<double> values, double q);

/// Per-dimension bin of each action component on a uniform grid over [-1, 1].
std::vector<int> quantize_bins(const Vector& action, int bins_per_dim);

/// Plug-in Shannon entropy (bits) of the joint categorical over quantized action vectors.
/// Rows are actions.
double action_entropy(const Matrix& actions, int bins_per_dim = 100);

/// Anything that maps states to actions.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual Vector act(const Vector& state, std::mt19937_64& rng) = 0;
  virtual bool deterministic() const = 0;
  /// n draws at one state (rows).
  virtual Matrix sample(const Vector& state, int n, std::mt19937_64& rng);
};

class AgentPolicy : public Policy {
 public:
  AgentPolicy(Agent& agent, bool deterministic) : agent_(agent), deterministic_(deterministic) {}
  Vector act(const Vector& state, std::mt19937_64& rng) override {
    return agent_.act(state, deterministic_, rng);
  }
  bool deterministic() const override { return deterministic_; }
  Matrix sample(const Vector& state, int n, std::mt19937_64& rng) override;

 private:
  Agent& agent_;
  bool deterministic_;
};

/// Independent uniform actions on [-1, 1]^D.
class UniformPolicy : public Policy {
 public:
  explicit UniformPolicy(int dim) : dim_(dim) {}
  Vector act(const Vector& state, std::mt19937_64& rng) override;
  bool deterministic() const override { return false; }

 private:
  int dim_;
};

/// Mean over states of the entropy of `n_draws` quantized actions at each state (bits).
/// Deterministic policies give exactly 0 without sampling.
double conditional_entropy(Policy& policy, const Matrix& states, std::mt19937_64& rng,
                           int n_draws = 1000, int bins_per_dim = 100);

struct RolloutSet {
  std::vector<Episode> episodes;
  Matrix pooled_actions;
  Matrix pooled_states;
  std::vector<double> returns;
  double mean_return() const;
};

/// `episodes` rollouts with env seeds eval_episode_seed(seed, i).
RolloutSet run_episodes(Policy& policy, Env& env, int episodes, std::uint64_t seed);

/// Episode return mapped onto [0, 1] with the env's return bounds.
double normalized_return(double ret, const EnvSpec& spec);

struct ReturnPerBit {
  double mean_return = 0.0;
  double normalized_return = 0.0;
  double entropy_bits = 0.0;
  double ratio = 0.0;  // normalized return per bit; meaningless when !defined
  bool defined = false;
};

inline constexpr double kMinEntropyBits = 1e-6;

/// ret / H, flagged undefined when H < 1e-6 bits.
ReturnPerBit return_per_bit(double ret, double entropy_bits);

/// Rollouts with the policy (deterministic agents per the standard protocol); the ratio
/// uses the normalized return so that negative-reward tasks compare sensibly.
ReturnPerBit return_per_bit(Policy& policy, Env& env, int episodes, std::uint64_t seed,
                            int bins_per_dim = 100);

struct NoisePoint {
  double sigma = 0.0;
  double mean_return = 0.0;
  double sem = 0.0;
};

/// Mean return of the policy acting on noisy observations, one entry per sigma.
std::vector<NoisePoint> noise_sweep(Policy& policy, const Env& env, const std::vector<double>& sigmas,
                                    int episodes, std::uint64_t seed);

/// Count of adjacent increases in a sequence that should be non-increasing.
int count_inversions(const std::vector<double>& values);

struct OpenLoopResult {
  PriorKind prior = PriorKind::kUniform;
  int prompt = 0;
  double open_loop_return = 0.0;             // mean over episodes, open-loop phase only
  std::vector<double> episode_open_returns;
  Vector cumulative_reward;                   // mean cumulative reward per step
};

struct OpenLoopOptions {
  int prompt = 15;
  int episodes = 20;
  std::uint64_t seed = 0;
  LzPriorOptions lz;
  int lz_context = 0;  // 0: the whole episode so far
};

/// First `prompt` actions closed-loop from the deterministic actor, the rest drawn
/// autoregressively from the chosen prior without looking at observations.
OpenLoopResult open_loop_eval(Agent& agent, PriorKind prior, const Env& env,
                              const OpenLoopOptions& opts);

struct CurvePoint {
  std::int64_t step = 0;
  double mean_return = 0.0;
  double mean_encoded_length = 0.0;
  std::vector<double> encoded_lengths;
  std::vector<double> returns;
};

/// Deterministic rollouts of each checkpoint; returns one point per checkpoint.
std::vector<CurvePoint> compressibility_curve(const std::vector<std::filesystem::path>& checkpoints,
                                              const std::string& env_name, int episodes,
                                              std::uint64_t seed);
void write_curve_csv(const std::filesystem::path& path, const std::vector<CurvePoint>& curve);

/// Welch t statistic and a one-sided p-value for mean(a) < mean(b).
struct TTest {
  double t = 0.0;
  double df = 0.0;
  double p_less = 1.0;
};
TTest welch_t_test(const std::vector<double>& a, const std::vector<double>& b);

struct EvalReport {
  std::string env;
  std::string variant;
  double mean_return = 0.0;
  double return_p20 = 0.0;
  double return_p80 = 0.0;
  double entropy_bits = 0.0;
  double conditional_entropy_bits = 0.0;
  double mutual_information_bits = 0.0;
  ReturnPerBit rpb;
  std::vector<NoisePoint> noise;
  std::vector<OpenLoopResult> open_loop;
};

/// JSON with undefined quantities written as null next to an explicit flag.
std::string to_json(const EvalReport& r);

}  // namespace seqprior
