#include <seqprior/config.hpp>

#include <fstream>
#include <functional>
#include <sstream>

#include <json.hpp>

namespace seqprior {

using nlohmann::json;

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kSac: return "sac";
    case Variant::kMiracle: return "miracle";
    case Variant::kLzSac: return "lz-sac";
    case Variant::kSpac: return "spac";
  }
  return "unknown";
}

Variant parse_variant(const std::string& name) {
  if (name == "sac") return Variant::kSac;
  if (name == "miracle") return Variant::kMiracle;
  if (name == "lz-sac" || name == "lzsac") return Variant::kLzSac;
  if (name == "spac") return Variant::kSpac;
  throw ConfigError("unknown variant '" + name + "' (expected sac, miracle, lz-sac, spac)");
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v = {Variant::kSac, Variant::kMiracle, Variant::kLzSac, Variant::kSpac};
  return v;
}

int TrainConfig::resolved_tau_max(int episode_steps) const {
  int t = tau_max > 0 ? tau_max : std::max(tau_min, static_cast<int>(0.4 * episode_steps));
  if (variant == Variant::kSpac) t = std::min(t, tf_max_context);
  return std::max(t, tau_min);
}

namespace {

struct Field {
  std::function<json(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const json&)> set;
};

[[noreturn]] void fail(const std::string& key, const std::string& what) {
  throw ConfigError("config key '" + key + "': " + what);
}

template <class T>
T as(const std::string& key, const json& v) {
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) fail(key, "expected a boolean");
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) {
      if (v.is_number_float() && v.get<double>() == static_cast<double>(static_cast<std::int64_t>(v.get<double>())))
        return static_cast<T>(v.get<double>());
      fail(key, "expected an integer");
    }
    if constexpr (std::is_unsigned_v<T>) {
      if (v.is_number_integer() && v.get<std::int64_t>() < 0 && !v.is_number_unsigned()) fail(key, "must be non-negative");
    }
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) fail(key, "expected a number");
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) fail(key, "expected a string");
  }
  return v.get<T>();
}

#define SQ_FIELD(key, member, type)                                                          \
  {                                                                                          \
    key, Field {                                                                             \
      [](const TrainConfig& c) { return json(c.member); },                                    \
          [](TrainConfig& c, const json& v) { c.member = as<type>(key, v); }                 \
    }                                                                                        \
  }

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> f = {
      SQ_FIELD("run.env", env, std::string),
      {"run.variant",
       Field{[](const TrainConfig& c) { return json(to_string(c.variant)); },
             [](TrainConfig& c, const json& v) {
               try {
                 c.variant = parse_variant(as<std::string>("run.variant", v));
               } catch (const ConfigError& e) {
                 fail("run.variant", e.what());
               }
             }}},
      SQ_FIELD("run.seed", seed, std::uint64_t),
      SQ_FIELD("run.steps", steps, std::int64_t),
      SQ_FIELD("run.seed_steps", seed_steps, int),
      SQ_FIELD("run.eval_interval", eval_interval, int),
      SQ_FIELD("run.eval_episodes", eval_episodes, int),
      SQ_FIELD("run.output_dir", output_dir, std::string),
      SQ_FIELD("env.action_repeat", action_repeat, int),
      SQ_FIELD("agent.alpha", alpha, double),
      SQ_FIELD("agent.gamma", gamma, double),
      SQ_FIELD("agent.rho", rho, double),
      SQ_FIELD("agent.batch_size", batch_size, int),
      SQ_FIELD("agent.lr_actor", lr_actor, double),
      SQ_FIELD("agent.lr_critic", lr_critic, double),
      SQ_FIELD("agent.lr_prior", lr_prior, double),
      SQ_FIELD("agent.hidden", hidden, int),
      SQ_FIELD("agent.critic_update_every", critic_update_every, int),
      SQ_FIELD("agent.actor_update_every", actor_update_every, int),
      SQ_FIELD("agent.prior_update_every", prior_update_every, int),
      SQ_FIELD("replay.capacity", replay_capacity, std::int64_t),
      SQ_FIELD("replay.tau_min", tau_min, int),
      SQ_FIELD("replay.tau_max", tau_max, int),
      SQ_FIELD("transformer.width", tf_width, int),
      SQ_FIELD("transformer.heads", tf_heads, int),
      SQ_FIELD("transformer.layers", tf_layers, int),
      SQ_FIELD("transformer.max_context", tf_max_context, int),
      SQ_FIELD("transformer.dropout", tf_dropout, double),
      SQ_FIELD("transformer.lr", tf_lr, double),
      SQ_FIELD("transformer.warmup_tokens", tf_warmup_tokens, double),
      SQ_FIELD("compressor.granularity", granularity, int),
      SQ_FIELD("compressor.window", lz_window, int),
      SQ_FIELD("compressor.buffer", lz_buffer, int),
      SQ_FIELD("compressor.min_match", lz_min_match, int),
      {"eval.noise_grid",
       Field{[](const TrainConfig& c) { return json(c.noise_grid); },
             [](TrainConfig& c, const json& v) {
               if (!v.is_array()) fail("eval.noise_grid", "expected an array of numbers");
               std::vector<double> g;
               for (const auto& e : v) g.push_back(as<double>("eval.noise_grid", e));
               c.noise_grid = std::move(g);
             }}},
      SQ_FIELD("eval.open_loop_prompt", open_loop_prompt, int),
      SQ_FIELD("eval.lz_prior_grid", lz_prior_grid, int),
      SQ_FIELD("eval.lz_prior_temperature", lz_prior_temperature, double),
  };
  return f;
}

#undef SQ_FIELD

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : fields()) keys.push_back(k);
  return keys;
}

void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value) {
  auto it = fields().find(key);
  if (it == fields().end()) throw ConfigError("unknown config key '" + key + "'");
  json v;
  try {
    v = json::parse(value);
  } catch (const json::parse_error&) {
    v = value;  // bare strings on the command line
  }
  it->second.set(cfg, v);
}

void validate(const TrainConfig& c) {
  auto check = [](bool ok, const std::string& key, const std::string& what) {
    if (!ok) fail(key, what);
  };
  check(c.alpha >= 0.0, "agent.alpha", "must be >= 0");
  check(c.gamma >= 0.0 && c.gamma <= 1.0, "agent.gamma", "must be in [0, 1]");
  check(c.rho >= 0.0 && c.rho <= 1.0, "agent.rho", "must be in [0, 1]");
  check(c.batch_size >= 1, "agent.batch_size", "must be >= 1");
  check(c.lr_actor > 0.0, "agent.lr_actor", "must be > 0");
  check(c.lr_critic > 0.0, "agent.lr_critic", "must be > 0");
  check(c.lr_prior > 0.0, "agent.lr_prior", "must be > 0");
  check(c.hidden >= 1, "agent.hidden", "must be >= 1");
  check(c.critic_update_every >= 1, "agent.critic_update_every", "must be >= 1");
  check(c.actor_update_every >= 1, "agent.actor_update_every", "must be >= 1");
  check(c.prior_update_every >= 1, "agent.prior_update_every", "must be >= 1");
  check(c.steps >= 1, "run.steps", "must be >= 1");
  check(c.seed_steps >= 0, "run.seed_steps", "must be >= 0");
  check(c.eval_interval >= 1, "run.eval_interval", "must be >= 1");
  check(c.eval_episodes >= 1, "run.eval_episodes", "must be >= 1");
  check(c.action_repeat >= 1, "env.action_repeat", "must be >= 1");
  check(c.replay_capacity >= 1, "replay.capacity", "must be >= 1");
  check(c.tau_min >= 1, "replay.tau_min", "must be >= 1");
  check(c.tau_max == 0 || c.tau_max >= c.tau_min, "replay.tau_max", "must be 0 (auto) or >= replay.tau_min");
  check(c.tf_width >= 1 && c.tf_heads >= 1 && c.tf_width % c.tf_heads == 0, "transformer.width",
        "must be a positive multiple of transformer.heads");
  check(c.tf_layers >= 1, "transformer.layers", "must be >= 1");
  check(c.tf_max_context >= 1, "transformer.max_context", "must be >= 1");
  check(c.tf_dropout >= 0.0 && c.tf_dropout < 1.0, "transformer.dropout", "must be in [0, 1)");
  check(c.tf_lr > 0.0, "transformer.lr", "must be > 0");
  check(c.tf_warmup_tokens >= 0.0, "transformer.warmup_tokens", "must be >= 0");
  check(c.granularity >= 1 && c.granularity <= 127, "compressor.granularity", "must be in [1, 127]");
  check(c.lz_window >= 1 && c.lz_window <= 65535, "compressor.window", "must be in [1, 65535]");
  check(c.lz_buffer >= 1 && c.lz_buffer <= 255, "compressor.buffer", "must be in [1, 255]");
  check(c.lz_min_match >= 1, "compressor.min_match", "must be >= 1");
  for (double s : c.noise_grid) check(s >= 0.0, "eval.noise_grid", "noise scales must be >= 0");
  check(c.open_loop_prompt >= 1, "eval.open_loop_prompt", "must be >= 1");
  check(c.lz_prior_grid >= 2, "eval.lz_prior_grid", "must be >= 2");
  check(c.lz_prior_temperature >= 0.0, "eval.lz_prior_temperature", "must be >= 0");
  const auto names = {"double-integrator", "pendulum-swingup", "staircase-nav"};
  check(std::find(names.begin(), names.end(), c.env) != names.end(), "run.env", "unknown env '" + c.env + "'");
}

std::string serialize_config(const TrainConfig& cfg) {
  json j = json::object();
  for (const auto& [k, f] : fields()) j[k] = f.get(cfg);
  return j.dump(2) + "\n";
}

TrainConfig parse_config(const std::string& text,
                         const std::vector<std::pair<std::string, std::string>>& overrides) {
  TrainConfig cfg;
  const bool blank = text.find_first_not_of(" \t\r\n") == std::string::npos;
  if (!blank) {
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be a flat JSON object");
    for (const auto& [k, v] : j.items()) {
      auto it = fields().find(k);
      if (it == fields().end()) throw ConfigError("unknown config key '" + k + "'");
      it->second.set(cfg, v);
    }
  }
  for (const auto& [k, v] : overrides) set_config_value(cfg, k, v);
  validate(cfg);
  return cfg;
}

TrainConfig load_config(const std::filesystem::path& path,
                        const std::vector<std::pair<std::string, std::string>>& overrides) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), overrides);
}

}  // namespace seqprior
