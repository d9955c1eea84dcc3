#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <seqprior/checkpoint.hpp>
#include <seqprior/compressor.hpp>
#include <seqprior/config.hpp>
#include <seqprior/envs.hpp>
#include <seqprior/nn.hpp>
#include <seqprior/priors.hpp>
#include <seqprior/replay.hpp>

namespace seqprior {

/// r - alpha * C.
inline double augmented_reward(double reward, double cost, double alpha) { return reward - alpha * cost; }

/// The prior a variant scores its actions against.
PriorKind prior_kind(Variant v);

/// Per-sample complexity cost from already-evaluated terms:
/// SAC -> logpi, every other variant -> logpi - prior_term (log density or delta).
double complexity_cost(Variant v, double logpi, double prior_term);

struct UpdateStats {
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double prior_loss = 0.0;
  double logpi = 0.0;        // mean log pi of fresh actor samples
  double prior_term = 0.0;   // mean prior log density (or delta) of the same samples
  double q = 0.0;            // mean min-Q at the sampled actions
  int critic_updates = 0;
  int actor_updates = 0;
  int prior_updates = 0;
};

/// Actor, twin critics with targets, and the variant's prior.
class Agent {
 public:
  Agent(const TrainConfig& cfg, int obs_dim, int action_dim);

  Variant variant() const { return cfg_.variant; }
  const TrainConfig& config() const { return cfg_; }
  int obs_dim() const { return obs_dim_; }
  int action_dim() const { return action_dim_; }

  /// One actor pass; the deterministic flag selects tanh(mean).
  Vector act(const Vector& state, bool deterministic, std::mt19937_64& rng);
  /// n stochastic draws at one state (rows).
  Matrix sample_actions(const Vector& state, int n, std::mt19937_64& rng);

  /// Prior term for scoring `actions` (rows) after `contexts`: 0 for SAC, the Gaussian or
  /// transformer log density, or delta for LZ-SAC (a constant on the tape).
  ad::Var prior_term(ad::Tape& tape, const std::vector<Matrix>& contexts, ad::Var actions,
                     ad::Var pre_tanh);

  /// Augmented TD targets for a batch (fresh next actions from the current policy).
  Vector q_target(const Batch& batch);

  /// Losses on a caller-owned tape (no optimizer step). The actor loss draws its
  /// reparameterization noise from `rng`; the prior loss runs dropout from `dropout`
  /// when non-null and reports how many actions it scored.
  ad::Var critic_loss(ad::Tape& tape, const Batch& batch, const Vector& y);
  ad::Var actor_loss(ad::Tape& tape, const Batch& batch, std::mt19937_64& rng);
  ad::Var prior_loss(ad::Tape& tape, const Batch& batch, std::mt19937_64* dropout,
                     std::size_t* targets = nullptr);

  double critic_update(const Batch& batch);
  double actor_update(const Batch& batch);
  /// Likelihood step on buffer actions; SAC and LZ-SAC leave everything untouched.
  double prior_update(const Batch& batch);

  /// Critic each `critic_update_every`, actor/prior each `*_update_every` interaction steps.
  void update(const ReplayBuffer& buffer, std::int64_t step, int episode_steps, UpdateStats& stats);

  Mlp actor;
  Mlp q1, q2, q1_target, q2_target;
  GaussianPrior gaussian;
  Transformer transformer;

  /// Everything except the replay buffer.
  void save(Checkpoint& ck) const;
  void load(const Checkpoint& ck);

  std::mt19937_64 update_rng;   // actor samples inside updates
  std::mt19937_64 batch_rng;    // replay indices
  std::mt19937_64 tau_rng;      // one window length per batch
  std::mt19937_64 dropout_rng;  // transformer training
  double tokens_seen = 0.0;
  double total_tokens = 1.0;    // planned transformer training tokens (schedule end)

 private:
  LzParams lz() const;

  TrainConfig cfg_;
  int obs_dim_;
  int action_dim_;
  double last_logpi_ = 0.0, last_prior_ = 0.0, last_q_ = 0.0;
  bool warned_noop_ = false;
};

/// One evaluation episode.
struct Episode {
  Matrix states;
  Matrix actions;
  Vector rewards;
  double ret = 0.0;
};

/// Deterministic rollout of the agent's actor.
Episode rollout(Env& env, std::uint64_t seed, const std::function<Vector(const Vector&)>& policy);

struct EvalRecord {
  std::int64_t step = 0;
  double return_mean = 0.0;
  double return_p20 = 0.0;
  double return_p80 = 0.0;
  double return_std = 0.0;
  double encoded_length = 0.0;   // mean over episodes
  double action_entropy = 0.0;   // bits, pooled over episodes
  UpdateStats train;
};

/// Seeds of the evaluation episodes: the same for every evaluation of a run.
std::uint64_t eval_episode_seed(std::uint64_t run_seed, int episode);

/// Deterministic evaluation of the current actor.
EvalRecord evaluate_agent(Agent& agent, Env& env, const TrainConfig& cfg,
                          std::vector<Episode>* episodes = nullptr);

/// One metrics line.
std::string metrics_json(const EvalRecord& r);

struct TrainResult {
  std::filesystem::path run_dir;
  std::vector<EvalRecord> evals;  // only those produced by this call
  bool complete = false;          // false when paused
};

/// Seed phase, then interaction/update loop with periodic evaluation. Writes
/// config.json, metrics.jsonl, ckpt_0.bin, ckpt_<step>.bin, final.bin and DONE into run_dir.
/// On a component failure a resume state is left behind and the error is rethrown.
/// With `pause_at` > 0 the call returns at the first resume point at or after that
/// step (no DONE marker); `resume` picks the run up again from there.
TrainResult train_run(const TrainConfig& cfg, const std::filesystem::path& run_dir,
                      bool resume = false, std::int64_t pause_at = 0);

/// Checkpoint meta key marking a snapshot taken while the agent still acted uniformly
/// at random (ckpt_0.bin, written before the seed phase).
inline constexpr const char* kBehaviourKey = "behaviour";

/// <output_dir>/<env>/<variant>/seed<k>/<timestamp>
std::filesystem::path make_run_dir(const TrainConfig& cfg, const std::string& timestamp);

/// Rebuilds an agent (config from the checkpoint meta).
Agent load_agent(const std::filesystem::path& checkpoint);

}  // namespace seqprior
