#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <seqprior/config.hpp>

namespace seqprior {

struct SweepGrid {
  std::vector<Variant> variants;
  std::vector<std::string> envs;
  std::vector<std::uint64_t> seeds;
  std::vector<double> alphas;

  std::size_t size() const { return variants.size() * envs.size() * seeds.size() * alphas.size(); }
};

struct SweepCell {
  std::string env;
  Variant variant = Variant::kSac;
  std::uint64_t seed = 0;
  double alpha = 0.0;
  std::filesystem::path run_dir;
  std::string status;  // "done", "skipped" (already complete), "failed"
  std::string error;
};

struct SweepResult {
  std::vector<SweepCell> cells;
  std::filesystem::path manifest;
  int failures() const;
};

/// Trains one cell; the default is train_run.
using CellRunner = std::function<void(const TrainConfig&, const std::filesystem::path&)>;

/// One run directory per grid cell under `root` (= base.output_dir when empty):
///   [alpha<a>/]<env>/<variant>/seed<k>/<sweep timestamp>
/// The alpha level only appears when the grid has more than one alpha. A manifest
/// (sweep_manifest.json) records every cell; re-running the same sweep reuses its
/// timestamp and skips cells whose run directory is already marked DONE.
SweepResult run_sweep(const TrainConfig& base, const SweepGrid& grid, std::filesystem::path root = {},
                      const CellRunner& runner = {});

/// Fresh timestamp for run directories (UTC, sortable).
std::string timestamp_now();

struct RunSummary {
  std::filesystem::path dir;
  TrainConfig cfg;
  std::vector<std::int64_t> steps;
  std::vector<double> returns;          // return_mean per evaluation
  std::vector<double> encoded_lengths;  // encoded_length per evaluation
  bool complete = false;
};

/// Every directory below `root` holding config.json + metrics.jsonl, sorted by path.
/// Runs without a DONE marker are skipped with a warning unless `force`.
std::vector<RunSummary> discover_runs(const std::filesystem::path& root, bool force,
                                      std::vector<std::string>* warnings = nullptr);

struct CurvePointAgg {
  std::int64_t step = 0;
  double mean = 0.0;
  double p20 = 0.0;
  double p80 = 0.0;
  int n = 0;
};

/// Across-seed mean and 20/80 percentiles at every evaluation step present in all runs.
std::vector<CurvePointAgg> aggregate_curve(const std::vector<const RunSummary*>& runs);

struct ReportOutput {
  std::vector<std::filesystem::path> files;
  std::vector<std::string> warnings;
  int runs = 0;
};

/// Learning curves, final-return tables and any eval reports found in run directories
/// (eval_*.json), written as CSV plus SVG into `out_dir`.
ReportOutput report(const std::filesystem::path& root, const std::filesystem::path& out_dir,
                    bool force = false);

}  // namespace seqprior
