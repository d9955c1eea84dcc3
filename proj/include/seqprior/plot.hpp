#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace seqprior {

/// A curve with an optional band (lo/hi empty for none).
struct Series {
  std::string label;
  std::vector<double> x, y, lo, hi;
  bool dashed = false;
};

struct Bar {
  std::string label;
  double value = 0.0;
  double err = 0.0;
};

/// Static SVG line chart. Non-finite points are skipped.
void write_line_plot(const std::filesystem::path& path, const std::string& title, const std::string& xlabel,
                     const std::string& ylabel, const std::vector<Series>& series);

/// Static SVG bar chart with error whiskers.
void write_bar_plot(const std::filesystem::path& path, const std::string& title, const std::string& ylabel,
                    const std::vector<Bar>& bars);

}  // namespace seqprior
