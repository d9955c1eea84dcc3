// seqprior: train / eval / sweep / report / complexity-report
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include <seqprior/agent.hpp>
#include <seqprior/compressor.hpp>
#include <seqprior/eval.hpp>
#include <seqprior/plot.hpp>
#include <seqprior/run.hpp>

namespace fs = std::filesystem;
using namespace seqprior;

namespace {

enum Exit { kOk = 0, kConfig = 1, kRuntime = 2, kPartial = 3 };

std::string default_root() {
  const char* env = std::getenv("SEQPRIOR_OUT");
  return env && *env ? env : "runs";
}

// "key=value" strings from --set
std::vector<std::pair<std::string, std::string>> split_overrides(const std::vector<std::string>& sets) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + s + "'");
    out.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  return out;
}

struct TrainFlags {
  std::string config;
  std::vector<std::string> sets;
  // named flag -> config key; a value is only applied when the flag was given
  std::vector<std::pair<CLI::Option*, std::string>> named;
  std::map<std::string, std::string> raw;
  std::string output;

  // named flags beat --set, which beats the file
  TrainConfig resolve() const {
    auto ov = split_overrides(sets);
    for (const auto& [opt, key] : named) {
      if (opt->count() == 0) continue;
      const std::string& v = raw.at(key);
      const bool text = key == "run.variant" || key == "run.env" || key == "run.output_dir";
      ov.emplace_back(key, text ? nlohmann::json(v).dump() : v);
    }
    bool explicit_dir = false;
    for (const auto& [k, v] : ov) explicit_dir |= k == "run.output_dir";
    TrainConfig cfg = config.empty() ? parse_config("", ov) : load_config(config, ov);
    if (!explicit_dir && config.empty()) cfg.output_dir = default_root();
    return cfg;
  }
};

void add_train_flags(CLI::App* app, TrainFlags& f) {
  app->add_option("-c,--config", f.config, "config file (flat JSON, dotted keys)");
  app->add_option("--set", f.sets, "override, key=value (repeatable)");
  const std::vector<std::tuple<std::string, std::string, std::string>> flags = {
      {"--variant", "run.variant", "sac | miracle | lz-sac | spac"},
      {"--env", "run.env", "double-integrator | pendulum-swingup | staircase-nav"},
      {"--alpha", "agent.alpha", "complexity weight"},
      {"--gamma", "agent.gamma", "discount"},
      {"--rho", "agent.rho", "target smoothing"},
      {"--batch-size", "agent.batch_size", ""},
      {"--lr-actor", "agent.lr_actor", ""},
      {"--lr-critic", "agent.lr_critic", ""},
      {"--lr-transformer", "transformer.lr", ""},
      {"--tau-max", "replay.tau_max", "longest action window (0: automatic)"},
      {"--steps", "run.steps", "interaction steps"},
      {"--seed", "run.seed", ""},
      {"--eval-interval", "run.eval_interval", ""},
      {"-o,--output", "run.output_dir", "output root (default $SEQPRIOR_OUT or ./runs)"},
  };
  for (const auto& [name, key, help] : flags) {
    f.raw[key];
    f.named.emplace_back(app->add_option(name, f.raw[key], help), key);
  }
}

int cmd_train(const TrainFlags& f, const std::string& run_dir, bool resume) {
  const TrainConfig cfg = f.resolve();
  const fs::path dir = run_dir.empty() ? make_run_dir(cfg, timestamp_now()) : fs::path(run_dir);
  std::cout << "run directory: " << dir.string() << "\n";
  const auto res = train_run(cfg, dir, resume);
  if (!res.evals.empty()) {
    const auto& last = res.evals.back();
    std::cout << "final eval at step " << last.step << ": return " << last.return_mean << ", encoded_length "
              << last.encoded_length << "\n";
  }
  return kOk;
}

struct EvalFlags {
  std::string checkpoint;
  std::vector<std::string> checkpoints;
  std::string env;
  std::string protocol = "standard";
  int episodes = 20;
  std::vector<double> sigmas;
  std::vector<int> prompts;
  std::string out;
  long long seed = -1;
  bool stochastic = false;
};

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << text;
}

int cmd_eval(const EvalFlags& f) {
  static const std::vector<std::string> protocols = {"standard", "rpb", "noise", "open-loop", "compressibility"};
  if (std::find(protocols.begin(), protocols.end(), f.protocol) == protocols.end())
    throw ConfigError("unknown protocol '" + f.protocol + "'");
  if (f.episodes < 1) throw ConfigError("--episodes must be >= 1");

  if (f.protocol == "compressibility") {
    std::vector<fs::path> ckpts(f.checkpoints.begin(), f.checkpoints.end());
    if (!f.checkpoint.empty()) ckpts.insert(ckpts.begin(), f.checkpoint);
    if (ckpts.empty()) throw ConfigError("compressibility needs --checkpoints");
    const Agent first = load_agent(ckpts.front());
    const std::string env = f.env.empty() ? first.config().env : f.env;
    const auto seed = f.seed >= 0 ? static_cast<std::uint64_t>(f.seed) : first.config().seed;
    const auto curve = compressibility_curve(ckpts, env, f.episodes, seed);
    const fs::path out = f.out.empty() ? ckpts.front().parent_path() / "compressibility.csv" : fs::path(f.out);
    write_curve_csv(out, curve);
    Series len{"encoded length", {}, {}, {}, {}, false};
    for (const auto& p : curve) {
      len.x.push_back(static_cast<double>(p.step));
      len.y.push_back(p.mean_encoded_length);
    }
    auto svg = out;
    svg.replace_extension(".svg");
    write_line_plot(svg, "encoded length of evaluation actions, " + env, "checkpoint step", "bytes", {len});
    for (const auto& p : curve)
      std::cout << "step " << p.step << "  return " << p.mean_return << "  encoded_length " << p.mean_encoded_length
                << "\n";
    std::cout << "wrote " << out.string() << " and " << svg.string() << "\n";
    return kOk;
  }

  if (f.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  Agent agent = load_agent(f.checkpoint);
  const TrainConfig& cfg = agent.config();
  const std::string env_name = f.env.empty() ? cfg.env : f.env;
  auto env = make_env(env_name, cfg.action_repeat);
  if (env->spec().obs_dim != agent.obs_dim() || env->spec().action_dim != agent.action_dim())
    throw ConfigError("checkpoint shapes do not match env '" + env_name + "'");
  const auto seed = f.seed >= 0 ? static_cast<std::uint64_t>(f.seed) : cfg.seed;

  EvalReport rep;
  rep.env = env_name;
  rep.variant = to_string(agent.variant());
  AgentPolicy policy(agent, !f.stochastic);
  const RolloutSet set = run_episodes(policy, *env, f.episodes, seed);
  rep.mean_return = set.mean_return();
  rep.return_p20 = percentile(set.returns, 20.0);
  rep.return_p80 = percentile(set.returns, 80.0);
  rep.entropy_bits = action_entropy(set.pooled_actions);
  std::mt19937_64 crng(seed ^ 0xC0Dull);
  rep.conditional_entropy_bits = conditional_entropy(policy, set.pooled_states, crng);
  rep.mutual_information_bits = rep.entropy_bits - rep.conditional_entropy_bits;
  rep.rpb = return_per_bit(normalized_return(rep.mean_return, env->spec()), rep.mutual_information_bits);
  rep.rpb.mean_return = rep.mean_return;
  rep.rpb.normalized_return = normalized_return(rep.mean_return, env->spec());

  if (f.protocol == "noise") {
    const auto sigmas = f.sigmas.empty() ? cfg.noise_grid : f.sigmas;
    rep.noise = noise_sweep(policy, *env, sigmas, f.episodes, seed);
  }
  if (f.protocol == "open-loop") {
    std::vector<int> prompts = f.prompts.empty() ? std::vector<int>{cfg.open_loop_prompt} : f.prompts;
    OpenLoopOptions opts;
    opts.episodes = f.episodes;
    opts.seed = seed;
    opts.lz.grid = cfg.lz_prior_grid;
    opts.lz.temperature = cfg.lz_prior_temperature;
    opts.lz.granularity = cfg.granularity;
    opts.lz.lz = LzParams{cfg.lz_window, cfg.lz_buffer, cfg.lz_min_match};
    for (int prompt : prompts) {
      opts.prompt = prompt;
      for (auto kind : {PriorKind::kUniform, PriorKind::kGaussian, PriorKind::kTransformer, PriorKind::kLz})
        rep.open_loop.push_back(open_loop_eval(agent, kind, *env, opts));
    }
  }

  const fs::path out =
      f.out.empty() ? fs::path(f.checkpoint).parent_path() / ("eval_" + f.protocol + ".json") : fs::path(f.out);
  write_file(out, to_json(rep));

  std::cout << std::setprecision(6) << "return " << rep.mean_return << " [p20 " << rep.return_p20 << ", p80 "
            << rep.return_p80 << "]  H[a] " << rep.entropy_bits << " bits  I " << rep.mutual_information_bits
            << " bits  return/bit ";
  if (rep.rpb.defined)
    std::cout << rep.rpb.ratio << "\n";
  else
    std::cout << "undefined\n";
  if (!rep.noise.empty()) {
    Series s{rep.variant, {}, {}, {}, {}, false};
    std::ofstream csv(fs::path(out).replace_extension(".csv"));
    csv << "sigma,mean_return,sem\n";
    for (const auto& p : rep.noise) {
      csv << p.sigma << "," << p.mean_return << "," << p.sem << "\n";
      s.x.push_back(p.sigma);
      s.y.push_back(p.mean_return);
      s.lo.push_back(p.mean_return - p.sem);
      s.hi.push_back(p.mean_return + p.sem);
      std::cout << "sigma " << p.sigma << ": " << p.mean_return << "\n";
    }
    write_line_plot(fs::path(out).replace_extension(".svg"), "observation noise, " + env_name, "sigma", "mean return",
                    {s});
  }
  if (!rep.open_loop.empty()) {
    std::ofstream csv(fs::path(out).replace_extension(".csv"));
    csv << "prior,prompt,open_loop_return\n";
    std::vector<Bar> bars;
    for (const auto& o : rep.open_loop) {
      csv << to_string(o.prior) << "," << o.prompt << "," << o.open_loop_return << "\n";
      bars.push_back({to_string(o.prior) + "@" + std::to_string(o.prompt), o.open_loop_return, 0.0});
      std::cout << to_string(o.prior) << " prompt " << o.prompt << ": " << o.open_loop_return << "\n";
    }
    write_bar_plot(fs::path(out).replace_extension(".svg"), "open-loop return, " + env_name, "return", bars);
  }
  std::cout << "wrote " << out.string() << "\n";
  return kOk;
}

template <class T, class F>
std::vector<T> map_all(const std::vector<std::string>& in, F f) {
  std::vector<T> out;
  for (const auto& s : in) out.push_back(f(s));
  return out;
}

int cmd_complexity(int length, int dim, int period, int granularity, int draws, long long seed, const std::string& csv) {
  ComplexityOptions o;
  o.length = length;
  o.dim = dim;
  o.period = period;
  o.granularity = granularity;
  o.draws = draws;
  o.seed = static_cast<std::uint64_t>(seed);
  const auto rows = complexity_report(o);
  std::cout << std::left << std::setw(12) << "class" << std::right << std::setw(14) << "mean bytes" << std::setw(12)
            << "stddev" << "\n";
  for (const auto& r : rows)
    std::cout << std::left << std::setw(12) << to_string(r.cls) << std::right << std::fixed << std::setprecision(2)
              << std::setw(14) << r.mean_length << std::setw(12) << r.stddev << "\n";
  if (!csv.empty()) {
    std::ofstream os(csv);
    if (!os) throw std::runtime_error("cannot write " + csv);
    os << "class,length,dim,period,granularity,draws,mean_length,stddev\n";
    for (const auto& r : rows)
      os << to_string(r.cls) << "," << length << "," << dim << "," << period << "," << granularity << "," << draws
         << "," << r.mean_length << "," << r.stddev << "\n";
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sequence-compression priors for soft actor-critic"};
  app.require_subcommand(1);

  TrainFlags tf;
  std::string run_dir;
  bool resume = false;
  auto* train = app.add_subcommand("train", "train one agent");
  add_train_flags(train, tf);
  train->add_option("--run-dir", run_dir, "explicit run directory");
  train->add_flag("--resume", resume, "continue an interrupted run in --run-dir");

  EvalFlags ef;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", ef.checkpoint, "checkpoint file");
  eval->add_option("--checkpoints", ef.checkpoints, "checkpoint series (compressibility)");
  eval->add_option("--env", ef.env, "environment (default: the training env)");
  eval->add_option("--protocol", ef.protocol, "standard | rpb | noise | open-loop | compressibility");
  eval->add_option("--episodes", ef.episodes);
  eval->add_option("--sigmas", ef.sigmas, "observation noise grid");
  eval->add_option("--prompt", ef.prompts, "closed-loop prompt length(s)");
  eval->add_option("--seed", ef.seed);
  eval->add_flag("--stochastic", ef.stochastic, "sample from the policy instead of tanh(mean)");
  eval->add_option("-o,--out", ef.out, "report path (default: next to the checkpoint)");

  TrainFlags sf;
  std::vector<std::string> variants = {"sac", "miracle", "lz-sac", "spac"};
  std::vector<std::string> envs;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::vector<double> alphas;
  auto* sweep = app.add_subcommand("sweep", "variants x envs x seeds x alpha grid");
  add_train_flags(sweep, sf);
  sweep->add_option("--variants", variants);
  sweep->add_option("--envs", envs);
  sweep->add_option("--seeds", seeds);
  sweep->add_option("--alphas", alphas);

  std::string report_root, report_out;
  bool force = false;
  auto* rep = app.add_subcommand("report", "aggregate a run tree into CSV tables and SVG plots");
  rep->add_option("root", report_root, "run tree (default $SEQPRIOR_OUT or ./runs)");
  rep->add_option("-o,--out", report_out, "output directory (default <root>/report)");
  rep->add_flag("--force", force, "include runs without a DONE marker");

  int c_len = 200, c_dim = 1, c_period = 8, c_gran = 100, c_draws = 20;
  long long c_seed = 0;
  std::string c_csv;
  auto* cx = app.add_subcommand("complexity-report", "encoded length of synthetic sequence classes");
  cx->add_option("--length", c_len);
  cx->add_option("--dim", c_dim);
  cx->add_option("--period", c_period);
  cx->add_option("--granularity", c_gran);
  cx->add_option("--draws", c_draws);
  cx->add_option("--seed", c_seed);
  cx->add_option("--csv", c_csv, "also write the table as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*train) return cmd_train(tf, run_dir, resume);
    if (*eval) return cmd_eval(ef);
    if (*sweep) {
      const TrainConfig base = sf.resolve();
      SweepGrid grid;
      grid.variants = map_all<Variant>(variants, parse_variant);
      grid.envs = envs.empty() ? std::vector<std::string>{base.env} : envs;
      grid.seeds = seeds;
      grid.alphas = alphas.empty() ? std::vector<double>{base.alpha} : alphas;
      const auto res = run_sweep(base, grid);
      std::cout << "manifest: " << res.manifest.string() << "\n";
      for (const auto& c : res.cells) std::cout << c.status << "  " << c.run_dir.string() << "\n";
      if (res.failures() > 0) {
        std::cerr << res.failures() << " of " << res.cells.size() << " cells failed\n";
        return kPartial;
      }
      return kOk;
    }
    if (*rep) {
      const fs::path root = report_root.empty() ? fs::path(default_root()) : fs::path(report_root);
      const fs::path out = report_out.empty() ? root / "report" : fs::path(report_out);
      const auto r = report(root, out, force);
      for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
      std::cout << r.runs << " runs aggregated\n";
      for (const auto& f : r.files) std::cout << "wrote " << f.string() << "\n";
      return kOk;
    }
    if (*cx) return cmd_complexity(c_len, c_dim, c_period, c_gran, c_draws, c_seed, c_csv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const InputDomainError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kOk;
}
