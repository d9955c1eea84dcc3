#include <seqprior/eval.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <unordered_map>

#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

namespace seqprior {

double percentile(std::vector<double> values, double q) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<int> quantize_bins(const Vector& action, int bins_per_dim) {
  std::vector<int> out(static_cast<std::size_t>(action.size()));
  for (Eigen::Index d = 0; d < action.size(); ++d) {
    const int b = static_cast<int>(std::floor((action(d) + 1.0) * 0.5 * bins_per_dim));
    out[static_cast<std::size_t>(d)] = std::clamp(b, 0, bins_per_dim - 1);
  }
  return out;
}

namespace {

std::uint64_t bin_key(const Eigen::Ref<const Eigen::RowVectorXd>& a, int bins) {
  std::uint64_t key = 0;
  for (Eigen::Index d = a.size() - 1; d >= 0; --d) {
    const int b = std::clamp(static_cast<int>(std::floor((a(d) + 1.0) * 0.5 * bins)), 0, bins - 1);
    key = key * static_cast<std::uint64_t>(bins) + static_cast<std::uint64_t>(b);
  }
  return key;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sem_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

}  // namespace

double action_entropy(const Matrix& actions, int bins_per_dim) {
  if (actions.rows() == 0) throw PreconditionError("action_entropy needs at least one action");
  if (bins_per_dim < 1) throw ConfigError("bins_per_dim must be >= 1");
  if (std::pow(static_cast<double>(bins_per_dim), static_cast<double>(actions.cols())) > 1.8e19)
    throw ConfigError("too many joint bins for the action dimension");
  std::unordered_map<std::uint64_t, std::int64_t> counts;
  for (Eigen::Index i = 0; i < actions.rows(); ++i) ++counts[bin_key(actions.row(i), bins_per_dim)];
  // a fixed summation order keeps the estimate independent of sample order
  std::vector<std::int64_t> c;
  c.reserve(counts.size());
  for (const auto& kv : counts) c.push_back(kv.second);
  std::sort(c.begin(), c.end());
  const double n = static_cast<double>(actions.rows());
  double h = 0.0;
  for (auto k : c) {
    const double p = static_cast<double>(k) / n;
    h -= p * std::log2(p);
  }
  return std::max(h, 0.0);
}

Matrix Policy::sample(const Vector& state, int n, std::mt19937_64& rng) {
  Vector first = act(state, rng);
  Matrix out(n, first.size());
  out.row(0) = first.transpose();
  for (int i = 1; i < n; ++i) out.row(i) = act(state, rng).transpose();
  return out;
}

Matrix AgentPolicy::sample(const Vector& state, int n, std::mt19937_64& rng) {
  if (deterministic_) return agent_.act(state, true, rng).transpose().replicate(n, 1);
  return agent_.sample_actions(state, n, rng);
}

Vector UniformPolicy::act(const Vector&, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  Vector a(dim_);
  for (int d = 0; d < dim_; ++d) a(d) = unif(rng);
  return a;
}

double conditional_entropy(Policy& policy, const Matrix& states, std::mt19937_64& rng, int n_draws,
                           int bins_per_dim) {
  if (policy.deterministic()) return 0.0;
  if (states.rows() == 0) throw PreconditionError("conditional_entropy needs at least one state");
  double total = 0.0;
  for (Eigen::Index i = 0; i < states.rows(); ++i)
    total += action_entropy(policy.sample(states.row(i).transpose(), n_draws, rng), bins_per_dim);
  return total / static_cast<double>(states.rows());
}

double RolloutSet::mean_return() const { return mean_of(returns); }

RolloutSet run_episodes(Policy& policy, Env& env, int episodes, std::uint64_t seed) {
  if (episodes < 1) throw ConfigError("need at least one episode");
  RolloutSet set;
  std::mt19937_64 rng(seed ^ 0x90C1ull);
  Eigen::Index rows = 0;
  for (int e = 0; e < episodes; ++e) {
    set.episodes.push_back(
        rollout(env, eval_episode_seed(seed, e), [&](const Vector& s) { return policy.act(s, rng); }));
    set.returns.push_back(set.episodes.back().ret);
    rows += set.episodes.back().actions.rows();
  }
  set.pooled_actions.resize(rows, env.spec().action_dim);
  set.pooled_states.resize(rows, env.spec().obs_dim);
  Eigen::Index r = 0;
  for (const auto& ep : set.episodes) {
    set.pooled_actions.middleRows(r, ep.actions.rows()) = ep.actions;
    set.pooled_states.middleRows(r, ep.states.rows()) = ep.states;
    r += ep.actions.rows();
  }
  return set;
}

double normalized_return(double ret, const EnvSpec& spec) {
  const double span = spec.return_max - spec.return_min;
  if (!(span > 0.0)) throw ConfigError("env '" + spec.name + "' has no return range");
  return (ret - spec.return_min) / span;
}

ReturnPerBit return_per_bit(double ret, double entropy_bits) {
  ReturnPerBit r;
  r.mean_return = ret;
  r.normalized_return = ret;
  r.entropy_bits = entropy_bits;
  r.defined = entropy_bits >= kMinEntropyBits;
  r.ratio = r.defined ? ret / entropy_bits : 0.0;
  return r;
}

ReturnPerBit return_per_bit(Policy& policy, Env& env, int episodes, std::uint64_t seed, int bins_per_dim) {
  const RolloutSet set = run_episodes(policy, env, episodes, seed);
  double bits = action_entropy(set.pooled_actions, bins_per_dim);
  if (!policy.deterministic()) {
    // stochastic policies: information is H[a] - H[a|s]
    std::mt19937_64 rng(seed ^ 0xC0Dull);
    bits -= conditional_entropy(policy, set.pooled_states, rng, 1000, bins_per_dim);
  }
  const double norm = normalized_return(set.mean_return(), env.spec());
  ReturnPerBit r = return_per_bit(norm, bits);
  r.mean_return = set.mean_return();
  r.normalized_return = norm;
  return r;
}

std::vector<NoisePoint> noise_sweep(Policy& policy, const Env& env, const std::vector<double>& sigmas,
                                    int episodes, std::uint64_t seed) {
  std::vector<NoisePoint> out;
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    if (!(sigmas[i] >= 0.0)) throw ConfigError("noise scales must be >= 0");
    ObservationNoise noisy(env.clone(), sigmas[i], seed * 31 + i);
    const RolloutSet set = run_episodes(policy, noisy, episodes, seed);
    out.push_back({sigmas[i], set.mean_return(), sem_of(set.returns)});
  }
  return out;
}

int count_inversions(const std::vector<double>& values) {
  int n = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[i - 1]) ++n;
  return n;
}

OpenLoopResult open_loop_eval(Agent& agent, PriorKind prior, const Env& env_proto,
                              const OpenLoopOptions& opts) {
  auto env = env_proto.clone();
  const int length = env->spec().episode_length;
  if (opts.prompt < 1 || opts.prompt >= length)
    throw ConfigError("open-loop prompt must be in [1, episode length)");
  if (opts.episodes < 1) throw ConfigError("need at least one episode");
  const int dim = env->spec().action_dim;
  OpenLoopResult res;
  res.prior = prior;
  res.prompt = opts.prompt;
  res.cumulative_reward = Vector::Zero(length);
  std::mt19937_64 rng(opts.seed ^ (0x0B1ull + static_cast<std::uint64_t>(prior)));
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (int e = 0; e < opts.episodes; ++e) {
    Vector obs = env->reset(eval_episode_seed(opts.seed, e));
    Matrix history(0, dim);
    double open_return = 0.0, cum = 0.0;
    for (int t = 0; t < length; ++t) {
      Vector a(dim);
      if (t < opts.prompt) {
        a = agent.act(obs, true, rng);
      } else {
        switch (prior) {
          case PriorKind::kUniform:
            for (int d = 0; d < dim; ++d) a(d) = unif(rng);
            break;
          case PriorKind::kGaussian:
            a = gaussian_prior_sample(agent.gaussian, rng);
            break;
          case PriorKind::kTransformer:
            a = transformer_sample(agent.transformer, history, rng);
            break;
          case PriorKind::kLz: {
            const Eigen::Index keep =
                opts.lz_context > 0 ? std::min<Eigen::Index>(opts.lz_context, history.rows()) : history.rows();
            a = lz_prior_sample(history.bottomRows(keep), opts.lz, rng);
            break;
          }
        }
      }
      history.conservativeResize(history.rows() + 1, Eigen::NoChange);
      history.row(history.rows() - 1) = a.transpose();
      auto step = env->step(a);
      obs = step.observation;
      cum += step.reward;
      if (t >= opts.prompt) open_return += step.reward;
      res.cumulative_reward(t) += cum;
      if (step.done) {
        for (int k = t + 1; k < length; ++k) res.cumulative_reward(k) += cum;
        break;
      }
    }
    res.episode_open_returns.push_back(open_return);
  }
  res.cumulative_reward /= static_cast<double>(opts.episodes);
  res.open_loop_return = mean_of(res.episode_open_returns);
  return res;
}

std::vector<CurvePoint> compressibility_curve(const std::vector<std::filesystem::path>& checkpoints,
                                              const std::string& env_name, int episodes,
                                              std::uint64_t seed) {
  if (checkpoints.size() < 2) throw PreconditionError("compressibility_curve needs at least two checkpoints");
  std::vector<CurvePoint> curve;
  for (const auto& path : checkpoints) {
    Agent agent = load_agent(path);
    const auto& cfg = agent.config();
    auto env = make_env(env_name, cfg.action_repeat);
    const Checkpoint meta_only = read_checkpoint(path);
    // a seed-phase snapshot is evaluated with the behaviour it had: uniform actions
    AgentPolicy actor(agent, true);
    UniformPolicy uniform(env->spec().action_dim);
    const bool seed_phase = meta_only.meta.count(kBehaviourKey) && meta_only.meta.at(kBehaviourKey) == "uniform";
    Policy& policy = seed_phase ? static_cast<Policy&>(uniform) : actor;
    const RolloutSet set = run_episodes(policy, *env, episodes, seed);
    CurvePoint p;
    if (auto it = meta_only.meta.find("step"); it != meta_only.meta.end()) p.step = std::stoll(it->second);
    const LzParams lz{cfg.lz_window, cfg.lz_buffer, cfg.lz_min_match};
    for (const auto& ep : set.episodes)
      p.encoded_lengths.push_back(static_cast<double>(encoded_length(ep.actions, cfg.granularity, lz)));
    p.returns = set.returns;
    p.mean_return = mean_of(p.returns);
    p.mean_encoded_length = mean_of(p.encoded_lengths);
    curve.push_back(std::move(p));
  }
  return curve;
}

void write_curve_csv(const std::filesystem::path& path, const std::vector<CurvePoint>& curve) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.precision(10);
  os << "step,mean_return,mean_encoded_length\n";
  for (const auto& p : curve) os << p.step << "," << p.mean_return << "," << p.mean_encoded_length << "\n";
}

TTest welch_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2) throw PreconditionError("t-test needs two samples of size >= 2");
  const double ma = mean_of(a), mb = mean_of(b);
  const double va = std::pow(sem_of(a), 2), vb = std::pow(sem_of(b), 2);
  TTest r;
  const double se2 = va + vb;
  if (se2 == 0.0) {
    r.t = ma < mb ? -std::numeric_limits<double>::infinity() : (ma > mb ? std::numeric_limits<double>::infinity() : 0.0);
    r.df = static_cast<double>(a.size() + b.size() - 2);
    r.p_less = ma < mb ? 0.0 : (ma > mb ? 1.0 : 0.5);
    return r;
  }
  r.t = (ma - mb) / std::sqrt(se2);
  r.df = se2 * se2 /
         (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
  boost::math::students_t dist(r.df);
  r.p_less = boost::math::cdf(dist, r.t);
  return r;
}

std::string to_json(const EvalReport& r) {
  using nlohmann::ordered_json;
  auto finite_or_null = [](double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); };
  ordered_json j;
  j["env"] = r.env;
  j["variant"] = r.variant;
  j["mean_return"] = finite_or_null(r.mean_return);
  j["return_p20"] = finite_or_null(r.return_p20);
  j["return_p80"] = finite_or_null(r.return_p80);
  j["entropy_bits"] = finite_or_null(r.entropy_bits);
  j["conditional_entropy_bits"] = finite_or_null(r.conditional_entropy_bits);
  j["mutual_information_bits"] = finite_or_null(r.mutual_information_bits);
  j["return_per_bit"] = r.rpb.defined ? finite_or_null(r.rpb.ratio) : ordered_json(nullptr);
  j["return_per_bit_defined"] = r.rpb.defined;
  j["normalized_return"] = finite_or_null(r.rpb.normalized_return);
  ordered_json noise = ordered_json::array();
  for (const auto& n : r.noise)
    noise.push_back({{"sigma", n.sigma}, {"mean_return", finite_or_null(n.mean_return)}, {"sem", finite_or_null(n.sem)}});
  j["noise"] = noise;
  ordered_json ol = ordered_json::array();
  for (const auto& o : r.open_loop) {
    ordered_json curve = ordered_json::array();
    for (Eigen::Index t = 0; t < o.cumulative_reward.size(); ++t) curve.push_back(finite_or_null(o.cumulative_reward(t)));
    ol.push_back({{"prior", to_string(o.prior)},
                  {"prompt", o.prompt},
                  {"open_loop_return", finite_or_null(o.open_loop_return)},
                  {"cumulative_reward", curve}});
  }
  j["open_loop"] = ol;
  return j.dump(2) + "\n";
}

}  // namespace seqprior
