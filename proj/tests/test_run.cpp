#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include <seqprior/eval.hpp>
#include <seqprior/run.hpp>

using namespace seqprior;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("seqprior_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// fake training: return at step k is seed + k/1000 (+ alpha)
void fake_run(const TrainConfig& cfg, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream(dir / "config.json") << serialize_config(cfg);
  std::ofstream m(dir / "metrics.jsonl");
  for (int step = 1000; step <= 3000; step += 1000) {
    nlohmann::ordered_json j;
    j["step"] = step;
    j["return_mean"] = static_cast<double>(cfg.seed) + step / 1000.0 + cfg.alpha;
    j["encoded_length"] = 100.0 - step / 100.0;
    m << j.dump() << "\n";
  }
  std::ofstream(dir / "DONE") << "ok\n";
}

SweepGrid grid(std::vector<double> alphas = {0.1}) {
  SweepGrid g;
  g.variants = all_variants();
  g.envs = {"double-integrator"};
  g.seeds = {0, 1, 2, 3, 4};
  g.alphas = std::move(alphas);
  return g;
}

}  // namespace

TEST_CASE("a 4 x 1 x 5 sweep makes 20 run directories and a manifest") {
  const auto root = scratch("sweep20");
  const auto res = run_sweep(TrainConfig{}, grid(), root, fake_run);
  CHECK(res.cells.size() == 20);
  CHECK(res.failures() == 0);
  std::set<fs::path> dirs;
  for (const auto& c : res.cells) {
    CHECK(c.status == "done");
    CHECK(fs::exists(c.run_dir / "DONE"));
    dirs.insert(c.run_dir);
  }
  CHECK(dirs.size() == 20);
  // <env>/<variant>/seed<k>/<timestamp>
  const auto rel = fs::relative(res.cells.front().run_dir, root);
  auto it = rel.begin();
  CHECK(*it++ == "double-integrator");
  CHECK(*it++ == "sac");
  CHECK(*it++ == "seed0");
  const auto manifest = nlohmann::json::parse(slurp(res.manifest));
  CHECK(manifest["cells"].size() == 20);
  fs::remove_all(root);
}

TEST_CASE("an alpha grid adds one directory level per alpha") {
  const auto root = scratch("sweep_alpha");
  auto g = grid({0.02, 0.05, 0.1});
  g.variants = {Variant::kLzSac};
  g.seeds = {0};
  const auto res = run_sweep(TrainConfig{}, g, root, fake_run);
  REQUIRE(res.cells.size() == 3);
  std::set<std::string> tops;
  for (const auto& c : res.cells) tops.insert(fs::relative(c.run_dir, root).begin()->string());
  CHECK(tops.size() == 3);
  const auto cfg = parse_config(slurp(res.cells[1].run_dir / "config.json"));
  CHECK(cfg.alpha == 0.05);
  fs::remove_all(root);
}

TEST_CASE("failures stay in their cell and resuming skips finished cells") {
  const auto root = scratch("sweep_fail");
  int calls = 0;
  auto flaky = [&](const TrainConfig& cfg, const fs::path& dir) {
    ++calls;
    if (cfg.seed == 2 && cfg.variant == Variant::kSpac) throw std::runtime_error("boom");
    fake_run(cfg, dir);
  };
  const auto first = run_sweep(TrainConfig{}, grid(), root, flaky);
  CHECK(first.failures() == 1);
  CHECK(calls == 20);
  const auto manifest = nlohmann::json::parse(slurp(first.manifest));
  int failed = 0;
  for (const auto& c : manifest["cells"])
    if (c["status"] == "failed") {
      ++failed;
      CHECK(c["error"] == "boom");
    }
  CHECK(failed == 1);

  calls = 0;
  const auto counted = [&](const TrainConfig& cfg, const fs::path& dir) {
    ++calls;
    fake_run(cfg, dir);
  };
  const auto second = run_sweep(TrainConfig{}, grid(), root, counted);
  CHECK(calls == 1);
  CHECK(second.failures() == 0);
  int skipped = 0;
  for (const auto& c : second.cells) skipped += c.status == "skipped";
  CHECK(skipped == 19);
  fs::remove_all(root);
}

TEST_CASE("invalid grids are refused") {
  auto g = grid();
  g.seeds.clear();
  CHECK_THROWS_AS(run_sweep(TrainConfig{}, g, scratch("sweep_bad"), fake_run), ConfigError);
  g = grid({-0.1});
  CHECK_THROWS_AS(run_sweep(TrainConfig{}, g, scratch("sweep_bad"), fake_run), ConfigError);
}

TEST_CASE("report aggregates seeds with mean and 20/80 percentiles, deterministically") {
  const auto root = scratch("report");
  auto g = grid();
  g.variants = {Variant::kSac, Variant::kLzSac};
  run_sweep(TrainConfig{}, g, root, fake_run);
  // one unfinished run is ignored unless forced
  auto cfg = TrainConfig{};
  cfg.seed = 99;
  fake_run(cfg, root / "double-integrator" / "sac" / "seed99" / "x");
  fs::remove(root / "double-integrator" / "sac" / "seed99" / "x" / "DONE");

  std::vector<std::string> warnings;
  const auto runs = discover_runs(root, false, &warnings);
  CHECK(runs.size() == 10);
  CHECK(warnings.size() == 1);
  CHECK(discover_runs(root, true).size() == 11);

  std::vector<const RunSummary*> sac;
  for (const auto& r : runs)
    if (r.cfg.variant == Variant::kSac) sac.push_back(&r);
  const auto curve = aggregate_curve(sac);
  REQUIRE(curve.size() == 3);
  // hand computation: seeds 0..4 plus 2 + 0.1 at step 2000
  CHECK(curve[1].mean == doctest::Approx((0 + 1 + 2 + 3 + 4) / 5.0 + 2.1));
  CHECK(curve[1].p20 == doctest::Approx(percentile({2.1, 3.1, 4.1, 5.1, 6.1}, 20)));
  CHECK(curve[1].p80 == doctest::Approx(percentile({2.1, 3.1, 4.1, 5.1, 6.1}, 80)));
  CHECK(curve[1].n == 5);

  const auto out1 = report(root, root / "r1");
  const auto out2 = report(root, root / "r2");
  CHECK(out1.runs == 10);
  CHECK(slurp(root / "r1" / "learning_curves.csv") == slurp(root / "r2" / "learning_curves.csv"));
  CHECK(slurp(root / "r1" / "final_returns.csv") == slurp(root / "r2" / "final_returns.csv"));
  bool svg = false;
  for (const auto& f : out1.files) svg |= f.extension() == ".svg";
  CHECK(svg);
  fs::remove_all(root);
}

TEST_CASE("runs without metrics are left out with a warning") {
  const auto root = scratch("report_missing");
  TrainConfig cfg;
  fake_run(cfg, root / "a");
  fake_run(cfg, root / "b");
  fs::remove(root / "b" / "metrics.jsonl");
  std::vector<std::string> w;
  CHECK(discover_runs(root, false, &w).size() == 1);
  CHECK(w.size() == 1);
  CHECK_THROWS_AS(report(scratch("report_empty_root_missing"), root / "out"), ConfigError);
  fs::remove_all(root);
}
