// Acceptance suite: one PASS/FAIL line per criterion. Training runs are cached under
// the work directory (a run is reused only if its DONE marker and config match).
//
//   acceptance [criterion ...] [--expect-fail k ...]     e.g. `acceptance 1 2 9`

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <seqprior/agent.hpp>
#include <seqprior/compressor.hpp>
#include <seqprior/eval.hpp>

#include "gradcheck.hpp"

using namespace seqprior;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kWork = SEQPRIOR_ACCEPTANCE_WORK;
const fs::path kData = SEQPRIOR_TEST_DATA;
const std::string kCli = SEQPRIOR_CLI;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string fmt(double v, int prec = 3) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(prec);
  os << v;
  return os.str();
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// desk-scale defaults shared by every training run below
TrainConfig desk(Variant v, const std::string& env, std::uint64_t seed, std::int64_t steps) {
  TrainConfig c;
  c.variant = v;
  c.env = env;
  c.seed = seed;
  c.steps = steps;
  c.hidden = 64;
  return c;
}

fs::path run_name(const TrainConfig& c) {
  return kWork / "runs" / c.env / (to_string(c.variant) + "_seed" + std::to_string(c.seed) + "_" +
                                   std::to_string(c.steps));
}

// cached training
fs::path trained(const TrainConfig& cfg) {
  const fs::path dir = run_name(cfg);
  if (fs::exists(dir / "DONE") && fs::exists(dir / "config.json") &&
      parse_config(slurp(dir / "config.json")) == cfg)
    return dir;
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto t0 = std::chrono::steady_clock::now();
  train_run(cfg, dir);
  std::cerr << "  trained " << dir.lexically_relative(kWork).string() << " in " << fmt(seconds_since(t0), 0)
            << " s\n";
  return dir;
}

std::vector<json> metrics(const fs::path& dir) {
  std::vector<json> out;
  std::ifstream is(dir / "metrics.jsonl");
  for (std::string line; std::getline(is, line);)
    if (!line.empty()) out.push_back(json::parse(line));
  return out;
}

// ---------------------------------------------------------------------------

Outcome compressor_roundtrip() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<int> len(1, 10000);
  const int alphabets[] = {256, 64, 16, 4};
  int failures = 0;
  std::size_t bytes = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const int alphabet = alphabets[i % 4];
    std::uniform_int_distribution<int> sym(0, alphabet - 1);
    std::vector<std::uint8_t> x(static_cast<std::size_t>(len(rng)));
    // every fifth input is built from repeated blocks, the rest is iid
    if (i % 5 == 0) {
      const std::size_t block = 1 + rng() % 37;
      for (std::size_t k = 0; k < x.size(); ++k)
        x[k] = k < block || rng() % 50 == 0 ? static_cast<std::uint8_t>(sym(rng)) : x[k - block];
    } else {
      for (auto& b : x) b = static_cast<std::uint8_t>(sym(rng));
    }
    bytes += x.size();
    const auto enc = lz_compress(x);
    if (lz_decompress(enc) != x || lz_decompress(from_bytes(to_bytes(enc))) != x) ++failures;
  }
  const double secs = seconds_since(t0);
  return {failures == 0 && secs < 120.0, std::to_string(n) + " sequences, " + std::to_string(bytes) + " bytes, " +
                                             std::to_string(failures) + " failures, " + fmt(secs, 1) + " s"};
}

Outcome complexity_ordering() {
  const auto t0 = std::chrono::steady_clock::now();
  ComplexityOptions o;
  o.length = 200;
  o.dim = 1;
  o.period = 8;
  o.draws = 20;
  o.seed = 3;
  const auto rows = complexity_report(o);
  bool ok = rows.size() == 4;
  std::string detail;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    detail += to_string(rows[i].cls) + "=" + fmt(rows[i].mean_length, 1) + " ";
    if (i > 0) {
      const auto t = welch_t_test(rows[i - 1].lengths, rows[i].lengths);
      ok = ok && rows[i - 1].mean_length < rows[i].mean_length && t.p_less < 0.05;
    }
  }
  const double secs = seconds_since(t0);
  return {ok && secs < 60.0, detail + "bytes; " + fmt(secs, 2) + " s"};
}

Outcome gradient_integrity() {
  using seqprior::testing::gradient_check;
  const auto t0 = std::chrono::steady_clock::now();
  auto micro = [](Variant v) {
    TrainConfig c;
    c.variant = v;
    c.hidden = 8;
    c.batch_size = 6;
    c.tf_width = 8;
    c.tf_heads = 2;
    c.tf_max_context = 5;
    c.tau_min = 2;
    c.tau_max = 5;
    c.alpha = 0.2;
    return c;
  };
  auto params = [](ParamStore& s) {
    std::vector<Param*> out;
    for (auto& p : s) out.push_back(&p);
    return out;
  };
  ReplayBuffer buf(10000);
  {
    auto env = make_env("staircase-nav");
    std::mt19937_64 rng(1);
    std::int64_t next = 0;
    seed_fill(buf, *env, 400, rng, next);
  }
  double worst = 0.0;
  std::string detail;
  auto record = [&](const std::string& name, double rel) {
    worst = std::max(worst, rel);
    detail += name + "=" + fmt(rel, 10) + " ";
  };
  std::mt19937_64 rng(2);
  {
    Agent agent(micro(Variant::kSac), 2, 2);
    const Batch batch = buf.sample_batch(6, 3, 3, rng);
    const Vector y = agent.q_target(batch);
    auto ps = params(agent.q1.store);
    for (auto* p : params(agent.q2.store)) ps.push_back(p);
    record("critic", gradient_check(ps, [&](ad::Tape& t) { return agent.critic_loss(t, batch, y); }).rel_error);
  }
  for (auto v : all_variants()) {
    Agent agent(micro(v), 2, 2);
    const Batch batch = buf.sample_batch(6, 4, 4, rng);
    std::mt19937_64 noise(3);
    record("actor/" + to_string(v), gradient_check(params(agent.actor.store), [&](ad::Tape& t) {
                                       auto n = noise;
                                       return agent.actor_loss(t, batch, n);
                                     }).rel_error);
  }
  for (auto v : {Variant::kSpac, Variant::kMiracle}) {
    Agent agent(micro(v), 2, 2);
    const Batch batch = buf.sample_batch(6, 3, 3, rng);
    ParamStore& store = v == Variant::kMiracle ? agent.gaussian.store : agent.transformer.store;
    std::normal_distribution<double> jitter(0.0, 0.2);
    for (auto& p : store)
      for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] += jitter(rng);
    std::mt19937_64 drop(4);
    record(v == Variant::kSpac ? "transformer" : "miracle-prior",
           gradient_check(params(store), [&](ad::Tape& t) {
             auto d = drop;
             return agent.prior_loss(t, batch, &d);
           }).rel_error);
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-3 && secs < 300.0, detail + "; " + fmt(secs, 1) + " s"};
}

// compares every logged field except those describing the prior's own training
Outcome variant_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::vector<json>> logs;
  for (auto v : all_variants()) {
    auto c = desk(v, "pendulum-swingup", 11, 1000);
    c.alpha = 0.0;
    c.seed_steps = 200;
    c.eval_interval = 200;
    c.eval_episodes = 5;
    const fs::path dir = kWork / "equivalence" / to_string(v);
    fs::remove_all(dir);
    fs::create_directories(dir);
    train_run(c, dir);
    auto m = metrics(dir);
    for (auto& line : m)
      for (const auto* k : {"prior_loss", "prior_term", "prior_updates"}) line.erase(k);
    logs.push_back(std::move(m));
  }
  bool same = !logs[0].empty();
  for (std::size_t k = 1; k < logs.size(); ++k) {
    same = same && logs[k].size() == logs[0].size();
    for (std::size_t i = 0; same && i < logs[0].size(); ++i) same = logs[k][i].dump() == logs[0][i].dump();
  }
  const double secs = seconds_since(t0);
  return {same && secs < 120.0, std::to_string(logs[0].size()) + " evaluations x 4 variants " +
                                    (same ? "identical" : "differ") + "; " + fmt(secs, 1) + " s"};
}

Outcome learning_smoke() {
  const auto t0 = std::chrono::steady_clock::now();
  const double threshold = json::parse(slurp(kData / "double_integrator_threshold.json")).at("threshold");
  int reached = 0;
  std::string detail = "threshold " + fmt(threshold, 1) + ", best:";
  for (std::uint64_t seed : {0, 1, 2}) {
    const auto dir = trained(desk(Variant::kSac, "double-integrator", seed, 30000));
    double best = -1e300;
    for (const auto& m : metrics(dir)) best = std::max(best, m.at("return_mean").get<double>());
    reached += best >= threshold;
    detail += " " + fmt(best, 1);
  }
  const double secs = seconds_since(t0);
  return {reached == 3 && secs < 1200.0, detail + "; " + fmt(secs, 0) + " s"};
}

Outcome compressibility_trend() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto dir = trained(desk(Variant::kLzSac, "staircase-nav", 0, 50000));
  const auto curve = compressibility_curve({dir / "ckpt_0.bin", dir / "ckpt_50000.bin"}, "staircase-nav", 20, 777);
  write_curve_csv(dir / "compressibility.csv", curve);
  const auto t = welch_t_test(curve[1].encoded_lengths, curve[0].encoded_lengths);
  const bool ok = t.p_less < 0.05 && curve[1].mean_return > curve[0].mean_return;
  const double secs = seconds_since(t0);
  return {ok && secs < 2400.0, "encoded length " + fmt(curve[0].mean_encoded_length, 1) + " -> " +
                                   fmt(curve[1].mean_encoded_length, 1) + " (p=" + fmt(t.p_less, 4) +
                                   "), return " + fmt(curve[0].mean_return, 1) + " -> " +
                                   fmt(curve[1].mean_return, 1) + "; " + fmt(secs, 0) + " s"};
}

// the first evaluation reaching a return level common to all runs
Outcome staircase_paths() {
  std::map<Variant, std::vector<std::vector<json>>> logs;
  for (auto v : {Variant::kSac, Variant::kLzSac})
    for (std::uint64_t seed : {0, 1, 2}) logs[v].push_back(metrics(trained(desk(v, "staircase-nav", seed, 50000))));
  double matched = 1e300;
  for (auto& [v, runs] : logs)
    for (auto& m : runs) {
      double best = -1e300;
      for (auto& line : m) best = std::max(best, line.at("return_mean").get<double>());
      matched = std::min(matched, best);
    }
  std::map<Variant, double> length;
  for (auto& [v, runs] : logs) {
    std::vector<double> at;
    for (auto& m : runs)
      for (auto& line : m)
        if (line.at("return_mean").get<double>() >= matched) {
          at.push_back(line.at("encoded_length").get<double>());
          break;
        }
    length[v] = mean(at);
  }
  return {length[Variant::kLzSac] <= length[Variant::kSac],
          "matched return " + fmt(matched, 1) + ": lz-sac " + fmt(length[Variant::kLzSac], 1) + " bytes, sac " +
              fmt(length[Variant::kSac], 1) + " bytes"};
}

ReturnPerBit rpb_of(const fs::path& checkpoint, const std::string& env_name) {
  Agent agent = load_agent(checkpoint);
  auto env = make_env(env_name, agent.config().action_repeat);
  AgentPolicy policy(agent, true);
  return return_per_bit(policy, *env, 20, 4242);
}

std::string rpb_text(const ReturnPerBit& r) { return r.defined ? fmt(r.ratio, 4) : std::string("undef"); }

Outcome return_per_bit_direction() {
  int wins = 0;
  std::string detail;
  const std::vector<std::pair<std::string, std::int64_t>> envs = {
      {"double-integrator", 30000}, {"pendulum-swingup", 30000}, {"staircase-nav", 50000}};
  for (const auto& [env, steps] : envs) {
    const auto sac = rpb_of(trained(desk(Variant::kSac, env, 0, steps)) / "final.bin", env);
    const auto lz = rpb_of(trained(desk(Variant::kLzSac, env, 0, steps)) / "final.bin", env);
    bool win = lz.defined && sac.defined && lz.ratio > sac.ratio;
    detail += env + ": sac " + rpb_text(sac) + " lz-sac " + rpb_text(lz);
    if (env == "pendulum-swingup") {
      // SPAC is trained for fewer steps; SAC is compared at the same step
      const auto spac_dir = trained(desk(Variant::kSpac, env, 0, 20000));
      const auto spac = rpb_of(spac_dir / "final.bin", env);
      const auto sac20 = rpb_of(trained(desk(Variant::kSac, env, 0, steps)) / "ckpt_20000.bin", env);
      win = win || (spac.defined && sac20.defined && spac.ratio > sac20.ratio);
      detail += " | @20k sac " + rpb_text(sac20) + " spac " + rpb_text(spac);
    }
    detail += win ? " [win]; " : " [loss]; ";
    wins += win;
  }
  return {wins >= 2, detail + std::to_string(wins) + "/3 envs"};
}

Outcome entropy_calibration() {
  const auto dir = trained(desk(Variant::kSac, "double-integrator", 0, 30000));
  Agent agent = load_agent(dir / "final.bin");
  auto env = make_env("double-integrator");
  AgentPolicy det(agent, true);
  const auto set = run_episodes(det, *env, 10, 99);
  std::mt19937_64 rng(5);
  const double h = action_entropy(set.pooled_actions);
  const double h_cond = conditional_entropy(det, set.pooled_states, rng);
  const double mi = h - h_cond;

  UniformPolicy uniform(1);
  const Matrix states = set.pooled_states.topRows(50);
  const double hu = conditional_entropy(uniform, states, rng, 1000, 100);
  const bool ok = mi == h && h_cond == 0.0 && std::abs(hu - std::log2(100.0)) < 0.15;
  return {ok, "deterministic: H[a]=" + fmt(h, 4) + " MI=" + fmt(mi, 4) + "; uniform H[a|s]=" + fmt(hu, 4) +
                  " vs log2(100)=" + fmt(std::log2(100.0), 4)};
}

Outcome open_loop_direction() {
  const auto dir = trained(desk(Variant::kSpac, "pendulum-swingup", 0, 20000));
  Agent agent = load_agent(dir / "final.bin");
  auto env = make_env("pendulum-swingup", agent.config().action_repeat);
  OpenLoopOptions o;
  o.episodes = 20;
  o.seed = 31;
  o.prompt = 15;
  std::map<PriorKind, OpenLoopResult> r;
  for (auto k : {PriorKind::kTransformer, PriorKind::kUniform, PriorKind::kGaussian, PriorKind::kLz})
    r[k] = open_loop_eval(agent, k, *env, o);
  o.prompt = 25;
  const auto tf25 = open_loop_eval(agent, PriorKind::kTransformer, *env, o);
  const double tf = r[PriorKind::kTransformer].open_loop_return;
  const double un = r[PriorKind::kUniform].open_loop_return;
  const double ga = r[PriorKind::kGaussian].open_loop_return;
  const double lz = r[PriorKind::kLz].open_loop_return;
  // different prompt lengths are compared on the whole episode
  const double full15 = r[PriorKind::kTransformer].cumulative_reward.tail(1)(0);
  const double full25 = tf25.cumulative_reward.tail(1)(0);
  const bool ok = tf > un && tf > ga && lz > un && full25 >= full15;
  return {ok, "open-loop return: transformer " + fmt(tf, 1) + ", uniform " + fmt(un, 1) + ", gaussian " +
                  fmt(ga, 1) + ", lz " + fmt(lz, 1) + "; episode return prompt 15 " + fmt(full15, 1) +
                  ", prompt 25 " + fmt(full25, 1)};
}

Outcome noise_shape() {
  std::string detail;
  bool ok = true;
  const std::vector<std::pair<Variant, std::int64_t>> agents = {
      {Variant::kSac, 30000}, {Variant::kLzSac, 30000}, {Variant::kSpac, 20000}};
  for (const auto& [v, steps] : agents) {
    const auto dir = trained(desk(v, "pendulum-swingup", 0, steps));
    Agent agent = load_agent(dir / "final.bin");
    auto env = make_env("pendulum-swingup", agent.config().action_repeat);
    AgentPolicy policy(agent, true);
    const auto pts = noise_sweep(policy, *env, canonical_noise_grid(), 20, 55);
    std::vector<double> returns;
    for (const auto& p : pts) returns.push_back(p.mean_return);
    const int inv = count_inversions(returns);
    ok = ok && inv <= 1;
    detail += to_string(v) + " " + std::to_string(inv) + " inversion(s) [";
    for (double x : returns) detail += fmt(x, 0) + " ";
    detail.back() = ']';
    detail += "; ";
  }
  return {ok, detail};
}

Outcome determinism() {
  const fs::path root = kWork / "determinism";
  fs::remove_all(root);
  bool ok = true;
  std::string detail;
  for (const std::string variant : {"lz-sac", "spac"}) {
    std::vector<std::string> logs;
    for (const std::string copy : {"a", "b"}) {
      const fs::path dir = root / variant / copy;
      const std::string cmd = "\"" + kCli + "\" train --variant " + variant +
                              " --env pendulum-swingup --steps 1600 --seed 9 --eval-interval 400"
                              " --set run.seed_steps=400 --set run.eval_episodes=3 --set agent.hidden=32"
                              " --run-dir \"" + dir.string() + "\" > /dev/null 2>&1";
      if (std::system(cmd.c_str()) != 0) {
        ok = false;
        detail += variant + " train failed; ";
      }
      logs.push_back(slurp(dir / "metrics.jsonl"));
    }
    const bool same = !logs[0].empty() && logs[0] == logs[1];
    ok = ok && same;
    detail += variant + (same ? " identical; " : " differ; ");
  }
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"compressor roundtrip", compressor_roundtrip},
      {"sequence-class ordering", complexity_ordering},
      {"gradient integrity", gradient_integrity},
      {"variant equivalence at alpha=0", variant_equivalence},
      {"SAC learns the double integrator", learning_smoke},
      {"compressibility rises with return (LZ-SAC, staircase)", compressibility_trend},
      {"LZ-SAC staircase paths are shorter to encode", staircase_paths},
      {"return per bit beats SAC", return_per_bit_direction},
      {"entropy estimator calibration", entropy_calibration},
      {"open-loop prior ordering (pendulum)", open_loop_direction},
      {"noise robustness shape (pendulum)", noise_shape},
      {"train determinism", determinism},
  };
  CLI::App app{"acceptance criteria"};
  std::vector<int> only, expect_fail;
  app.add_option("criteria", only, "run only these (default: all)")->check(CLI::Range(1, 12));
  app.add_option("--expect-fail", expect_fail,
                 "criteria known to fail; their FAIL is still printed but does not fail the run")
      ->check(CLI::Range(1, 12));
  CLI11_PARSE(app, argc, argv);
  std::set<int> chosen(only.begin(), only.end()), expected(expect_fail.begin(), expect_fail.end());

  fs::create_directories(kWork);
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!chosen.empty() && !chosen.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const bool known = expected.count(id) > 0;
    failed += !o.pass && !known;
    std::cout << "criterion " << id << " " << (o.pass ? "PASS" : "FAIL") << (!o.pass && known ? " (expected)" : "")
              << "  " << criteria[i].first << " -- " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
