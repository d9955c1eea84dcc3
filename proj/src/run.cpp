#include <seqprior/run.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include <json.hpp>

#include <seqprior/agent.hpp>
#include <seqprior/eval.hpp>
#include <seqprior/plot.hpp>

namespace seqprior {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

int SweepResult::failures() const {
  return static_cast<int>(std::count_if(cells.begin(), cells.end(), [](const SweepCell& c) { return c.status == "failed"; }));
}

std::string timestamp_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y%m%dT%H%M%SZ");
  return os.str();
}

namespace {

std::string alpha_label(double a) {
  std::ostringstream os;
  os << a;
  return "alpha" + os.str();
}

std::string read_text(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  const auto tmp = p.string() + ".tmp";
  {
    std::ofstream os(tmp);
    if (!os) throw std::runtime_error("cannot write " + tmp);
    os << text;
  }
  fs::rename(tmp, p);
}

void write_manifest(const fs::path& path, const std::string& stamp, const SweepGrid& grid,
                    const std::vector<SweepCell>& cells) {
  ordered_json j;
  j["timestamp"] = stamp;
  json variants = json::array();
  for (auto v : grid.variants) variants.push_back(to_string(v));
  j["grid"] = {{"variants", variants}, {"envs", grid.envs}, {"seeds", grid.seeds}, {"alphas", grid.alphas}};
  ordered_json arr = ordered_json::array();
  for (const auto& c : cells) {
    ordered_json e;
    e["env"] = c.env;
    e["variant"] = to_string(c.variant);
    e["seed"] = c.seed;
    e["alpha"] = c.alpha;
    e["run_dir"] = c.run_dir.string();
    e["status"] = c.status.empty() ? "pending" : c.status;
    if (!c.error.empty()) e["error"] = c.error;
    arr.push_back(e);
  }
  j["cells"] = arr;
  write_text(path, j.dump(2) + "\n");
}

}  // namespace

SweepResult run_sweep(const TrainConfig& base, const SweepGrid& grid, fs::path root, const CellRunner& runner) {
  if (grid.size() == 0) throw ConfigError("sweep grid is empty");
  for (double a : grid.alphas)
    if (!(a >= 0.0)) throw ConfigError("sweep alpha values must be >= 0");
  if (root.empty()) root = base.output_dir;
  fs::create_directories(root);
  SweepResult res;
  res.manifest = root / "sweep_manifest.json";

  std::string stamp = timestamp_now();
  if (fs::exists(res.manifest)) {
    // resuming: same directories as the interrupted sweep
    stamp = json::parse(read_text(res.manifest)).at("timestamp").get<std::string>();
  }
  const bool alpha_level = grid.alphas.size() > 1;
  for (double alpha : grid.alphas)
    for (const auto& env : grid.envs)
      for (auto variant : grid.variants)
        for (auto seed : grid.seeds) {
          SweepCell c;
          c.env = env;
          c.variant = variant;
          c.seed = seed;
          c.alpha = alpha;
          fs::path base_dir = alpha_level ? root / alpha_label(alpha) : root;
          c.run_dir = base_dir / env / to_string(variant) / ("seed" + std::to_string(seed)) / stamp;
          res.cells.push_back(std::move(c));
        }
  write_manifest(res.manifest, stamp, grid, res.cells);

  const CellRunner run = runner ? runner : CellRunner([](const TrainConfig& cfg, const fs::path& dir) {
    train_run(cfg, dir, true);
  });
  for (auto& c : res.cells) {
    if (fs::exists(c.run_dir / "DONE")) {
      c.status = "skipped";
      continue;
    }
    TrainConfig cfg = base;
    cfg.env = c.env;
    cfg.variant = c.variant;
    cfg.seed = c.seed;
    cfg.alpha = c.alpha;
    cfg.output_dir = root.string();
    try {
      validate(cfg);
      run(cfg, c.run_dir);
      c.status = "done";
    } catch (const std::exception& e) {
      c.status = "failed";
      c.error = e.what();
      std::cerr << "sweep cell " << c.run_dir.string() << " failed: " << e.what() << "\n";
    }
    write_manifest(res.manifest, stamp, grid, res.cells);
  }
  return res;
}

std::vector<RunSummary> discover_runs(const fs::path& root, bool force, std::vector<std::string>* warnings) {
  std::vector<RunSummary> runs;
  if (!fs::exists(root)) throw ConfigError("no run tree at " + root.string());
  std::vector<fs::path> dirs;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file() && e.path().filename() == "config.json") dirs.push_back(e.path().parent_path());
  std::sort(dirs.begin(), dirs.end());
  auto warn = [&](const std::string& w) {
    if (warnings) warnings->push_back(w);
  };
  for (const auto& d : dirs) {
    RunSummary r;
    r.dir = d;
    r.complete = fs::exists(d / "DONE");
    if (!r.complete && !force) {
      warn("skipping unfinished run " + d.string());
      continue;
    }
    if (!fs::exists(d / "metrics.jsonl")) {
      warn("skipping run without metrics " + d.string());
      continue;
    }
    try {
      r.cfg = parse_config(read_text(d / "config.json"));
      std::ifstream is(d / "metrics.jsonl");
      for (std::string line; std::getline(is, line);) {
        if (line.empty()) continue;
        const auto j = json::parse(line);
        r.steps.push_back(j.at("step").get<std::int64_t>());
        const auto& ret = j.at("return_mean");
        r.returns.push_back(ret.is_number() ? ret.get<double>() : std::nan(""));
        const auto& enc = j.at("encoded_length");
        r.encoded_lengths.push_back(enc.is_number() ? enc.get<double>() : std::nan(""));
      }
    } catch (const std::exception& e) {
      warn("skipping unreadable run " + d.string() + ": " + e.what());
      continue;
    }
    if (r.steps.empty()) {
      warn("skipping run with empty metrics " + d.string());
      continue;
    }
    runs.push_back(std::move(r));
  }
  return runs;
}

std::vector<CurvePointAgg> aggregate_curve(const std::vector<const RunSummary*>& runs) {
  std::vector<CurvePointAgg> out;
  if (runs.empty()) return out;
  std::map<std::int64_t, std::vector<double>> by_step;
  for (const auto* r : runs)
    for (std::size_t i = 0; i < r->steps.size(); ++i) by_step[r->steps[i]].push_back(r->returns[i]);
  for (const auto& [step, vals] : by_step) {
    if (vals.size() != runs.size()) continue;
    CurvePointAgg p;
    p.step = step;
    double s = 0.0;
    for (double v : vals) s += v;
    p.mean = s / static_cast<double>(vals.size());
    p.p20 = percentile(vals, 20.0);
    p.p80 = percentile(vals, 80.0);
    p.n = static_cast<int>(vals.size());
    out.push_back(p);
  }
  return out;
}

ReportOutput report(const fs::path& root, const fs::path& out_dir, bool force) {
  ReportOutput out;
  const auto runs = discover_runs(root, force, &out.warnings);
  if (runs.empty()) throw PreconditionError("no completed runs under " + root.string());
  out.runs = static_cast<int>(runs.size());
  fs::create_directories(out_dir);

  // group key: alpha / env / variant
  struct Key {
    double alpha;
    std::string env;
    std::string variant;
    bool operator<(const Key& o) const { return std::tie(alpha, env, variant) < std::tie(o.alpha, o.env, o.variant); }
  };
  std::map<Key, std::vector<const RunSummary*>> groups;
  for (const auto& r : runs) groups[{r.cfg.alpha, r.cfg.env, to_string(r.cfg.variant)}].push_back(&r);

  std::ofstream curves(out_dir / "learning_curves.csv");
  curves.precision(10);
  curves << "alpha,env,variant,step,mean_return,p20,p80,n\n";
  std::ofstream finals(out_dir / "final_returns.csv");
  finals.precision(10);
  finals << "alpha,env,variant,n_seeds,final_mean,final_p20,final_p80,final_encoded_length\n";
  std::map<std::pair<double, std::string>, std::vector<Series>> plots;
  for (const auto& [key, members] : groups) {
    const auto curve = aggregate_curve(members);
    Series s;
    s.label = key.variant;
    for (const auto& p : curve) {
      curves << key.alpha << "," << key.env << "," << key.variant << "," << p.step << "," << p.mean << "," << p.p20
             << "," << p.p80 << "," << p.n << "\n";
      s.x.push_back(static_cast<double>(p.step));
      s.y.push_back(p.mean);
      s.lo.push_back(p.p20);
      s.hi.push_back(p.p80);
    }
    plots[{key.alpha, key.env}].push_back(std::move(s));
    std::vector<double> last, enc;
    for (const auto* r : members) {
      last.push_back(r->returns.back());
      enc.push_back(r->encoded_lengths.back());
    }
    double m = 0.0, e = 0.0;
    for (double v : last) m += v;
    for (double v : enc) e += v;
    finals << key.alpha << "," << key.env << "," << key.variant << "," << members.size() << ","
           << m / static_cast<double>(last.size()) << "," << percentile(last, 20.0) << "," << percentile(last, 80.0)
           << "," << e / static_cast<double>(enc.size()) << "\n";
  }
  out.files.push_back(out_dir / "learning_curves.csv");
  out.files.push_back(out_dir / "final_returns.csv");
  for (const auto& [k, series] : plots) {
    std::ostringstream name;
    name << "curve_" << k.second << "_" << alpha_label(k.first) << ".svg";
    write_line_plot(out_dir / name.str(), k.second + " (alpha " + alpha_label(k.first).substr(5) + ")",
                    "interaction steps", "evaluation return (mean, 20-80 pct)", series);
    out.files.push_back(out_dir / name.str());
  }

  // eval reports dropped into run directories by `eval`
  struct EvalAgg {
    std::vector<double> rpb, normalized, entropy;
    std::map<double, std::vector<double>> noise;
    std::map<std::string, std::vector<double>> open_loop;
  };
  std::map<Key, EvalAgg> evals;
  for (const auto& r : runs) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(r.dir)) {
      const auto name = e.path().filename().string();
      if (name.rfind("eval_", 0) == 0 && e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      json j;
      try {
        j = json::parse(read_text(f));
      } catch (const std::exception& e) {
        out.warnings.push_back("unreadable eval report " + f.string());
        continue;
      }
      auto& agg = evals[{r.cfg.alpha, r.cfg.env, to_string(r.cfg.variant)}];
      if (j.value("return_per_bit_defined", false) && j["return_per_bit"].is_number())
        agg.rpb.push_back(j["return_per_bit"].get<double>());
      if (j.contains("normalized_return") && j["normalized_return"].is_number())
        agg.normalized.push_back(j["normalized_return"].get<double>());
      if (j.contains("entropy_bits") && j["entropy_bits"].is_number()) agg.entropy.push_back(j["entropy_bits"].get<double>());
      for (const auto& n : j.value("noise", json::array()))
        if (n["mean_return"].is_number()) agg.noise[n["sigma"].get<double>()].push_back(n["mean_return"].get<double>());
      for (const auto& o : j.value("open_loop", json::array()))
        if (o["open_loop_return"].is_number())
          agg.open_loop[o["prior"].get<std::string>() + "@" + std::to_string(o["prompt"].get<int>())].push_back(
              o["open_loop_return"].get<double>());
    }
  }
  if (!evals.empty()) {
    auto mean = [](const std::vector<double>& v) {
      double s = 0.0;
      for (double x : v) s += x;
      return v.empty() ? std::nan("") : s / static_cast<double>(v.size());
    };
    auto sem = [&](const std::vector<double>& v) {
      if (v.size() < 2) return 0.0;
      const double m = mean(v);
      double ss = 0.0;
      for (double x : v) ss += (x - m) * (x - m);
      return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
    };
    std::ofstream rpb(out_dir / "return_per_bit.csv");
    rpb.precision(10);
    rpb << "alpha,env,variant,n,return_per_bit,sem,normalized_return,entropy_bits\n";
    std::ofstream noise(out_dir / "noise.csv");
    noise.precision(10);
    noise << "alpha,env,variant,sigma,mean_return,sem,n\n";
    std::ofstream ol(out_dir / "open_loop.csv");
    ol.precision(10);
    ol << "alpha,env,variant,prior,prompt,open_loop_return,sem,n\n";
    std::map<std::pair<double, std::string>, std::vector<Bar>> rpb_bars;
    std::map<std::pair<double, std::string>, std::vector<Series>> noise_plots;
    for (const auto& [key, agg] : evals) {
      rpb << key.alpha << "," << key.env << "," << key.variant << "," << agg.rpb.size() << "," << mean(agg.rpb) << ","
          << sem(agg.rpb) << "," << mean(agg.normalized) << "," << mean(agg.entropy) << "\n";
      if (!agg.rpb.empty()) rpb_bars[{key.alpha, key.env}].push_back({key.variant, mean(agg.rpb), sem(agg.rpb)});
      Series s;
      s.label = key.variant;
      for (const auto& [sigma, vals] : agg.noise) {
        noise << key.alpha << "," << key.env << "," << key.variant << "," << sigma << "," << mean(vals) << ","
              << sem(vals) << "," << vals.size() << "\n";
        s.x.push_back(sigma);
        s.y.push_back(mean(vals));
      }
      if (!s.x.empty()) noise_plots[{key.alpha, key.env}].push_back(std::move(s));
      std::vector<Bar> bars;
      for (const auto& [name, vals] : agg.open_loop) {
        const auto at = name.find('@');
        ol << key.alpha << "," << key.env << "," << key.variant << "," << name.substr(0, at) << ","
           << name.substr(at + 1) << "," << mean(vals) << "," << sem(vals) << "," << vals.size() << "\n";
        bars.push_back({name, mean(vals), sem(vals)});
      }
      if (!bars.empty()) {
        const auto file = out_dir / ("open_loop_" + key.env + "_" + key.variant + "_" + alpha_label(key.alpha) + ".svg");
        write_bar_plot(file, "open-loop return, " + key.env + " / " + key.variant, "return", bars);
        out.files.push_back(file);
      }
    }
    out.files.push_back(out_dir / "return_per_bit.csv");
    out.files.push_back(out_dir / "noise.csv");
    out.files.push_back(out_dir / "open_loop.csv");
    for (const auto& [k, bars] : rpb_bars) {
      const auto file = out_dir / ("rpb_" + k.second + "_" + alpha_label(k.first) + ".svg");
      write_bar_plot(file, "return per bit, " + k.second, "normalized return / bit", bars);
      out.files.push_back(file);
    }
    for (const auto& [k, series] : noise_plots) {
      const auto file = out_dir / ("noise_" + k.second + "_" + alpha_label(k.first) + ".svg");
      write_line_plot(file, "observation noise, " + k.second, "sigma", "mean return", series);
      out.files.push_back(file);
    }
  }
  return out;
}

}  // namespace seqprior
