#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <seqprior/errors.hpp>

namespace seqprior {

enum class Variant { kSac, kMiracle, kLzSac, kSpac };

std::string to_string(Variant v);
Variant parse_variant(const std::string& name);
const std::vector<Variant>& all_variants();

/// Every hyperparameter of a training run. Keys in files and on the command line
/// are the flat dotted names listed by `config_keys()`.
struct TrainConfig {
  std::string env = "double-integrator";
  Variant variant = Variant::kSac;
  std::uint64_t seed = 0;
  std::int64_t steps = 50000;  // interaction steps, including the random seed phase
  int seed_steps = 1000;
  int eval_interval = 2000;
  int eval_episodes = 20;
  std::string output_dir = "runs";

  int action_repeat = 1;

  double alpha = 0.1;
  double gamma = 0.99;
  double rho = 0.01;
  int batch_size = 128;
  double lr_actor = 1e-3;
  double lr_critic = 1e-3;
  double lr_prior = 1e-3;  // learned Gaussian prior
  int hidden = 256;
  int critic_update_every = 1;
  int actor_update_every = 2;
  int prior_update_every = 2;

  std::int64_t replay_capacity = 1'000'000;
  int tau_min = 5;
  int tau_max = 0;  // 0: 0.4 x episode interaction steps, capped by the transformer context for SPAC

  int tf_width = 30;
  int tf_heads = 5;
  int tf_layers = 2;
  int tf_max_context = 20;
  double tf_dropout = 0.1;
  double tf_lr = 3e-4;
  double tf_warmup_tokens = 10000;

  int granularity = 100;
  int lz_window = 4096;
  int lz_buffer = 64;
  int lz_min_match = 4;

  std::vector<double> noise_grid = {0.01, 0.05, 0.1, 0.15, 0.2, 0.3, 0.5};
  int open_loop_prompt = 15;
  int lz_prior_grid = 9;
  double lz_prior_temperature = 1.0;

  bool operator==(const TrainConfig&) const = default;

  /// tau_max after resolving the automatic default for an episode length.
  int resolved_tau_max(int episode_steps) const;
};

/// Names of every accepted key.
std::vector<std::string> config_keys();

/// Applies "key" = "value" (value in JSON syntax or a bare string). Unknown keys,
/// type mismatches and out-of-range values throw ConfigError naming the key.
void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value);

/// Range and consistency checks; throws ConfigError.
void validate(const TrainConfig& cfg);

/// Flat JSON object text, one key per line, sorted.
std::string serialize_config(const TrainConfig& cfg);

/// Parses a flat JSON object (empty text means all defaults), then applies overrides.
TrainConfig parse_config(const std::string& text,
                         const std::vector<std::pair<std::string, std::string>>& overrides = {});
TrainConfig load_config(const std::filesystem::path& path,
                        const std::vector<std::pair<std::string, std::string>>& overrides = {});

}  // namespace seqprior
