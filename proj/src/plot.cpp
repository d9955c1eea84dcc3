#include <seqprior/plot.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace seqprior {

namespace {

constexpr double kW = 640, kH = 400, kLeft = 70, kRight = 150, kTop = 40, kBottom = 50;
const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string esc(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void settle() {
    if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
    if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

void frame(std::ostream& os, const std::string& title, const std::string& xlabel, const std::string& ylabel,
           const Range& xr, const Range& yr, bool xticks) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << kW / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << esc(title) << "</text>\n";
  const double x0 = kLeft, x1 = kW - kRight, y0 = kH - kBottom, y1 = kTop;
  os << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1 << "\" y2=\"" << y0 << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 << "\" y2=\"" << y1 << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = yr.lo + (yr.hi - yr.lo) * i / 4.0;
    const double y = y0 - (y0 - y1) * i / 4.0;
    os << "<text x=\"" << x0 - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << fmt(v) << "</text>\n";
    os << "<line x1=\"" << x0 << "\" y1=\"" << y << "\" x2=\"" << x1 << "\" y2=\"" << y
       << "\" stroke=\"#eee\"/>\n";
    if (xticks) {
      const double xv = xr.lo + (xr.hi - xr.lo) * i / 4.0;
      const double x = x0 + (x1 - x0) * i / 4.0;
      os << "<text x=\"" << x << "\" y=\"" << y0 + 16 << "\" text-anchor=\"middle\">" << fmt(xv) << "</text>\n";
    }
  }
  os << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << kH - 12 << "\" text-anchor=\"middle\">" << esc(xlabel)
     << "</text>\n";
  os << "<text x=\"16\" y=\"" << (y0 + y1) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
     << (y0 + y1) / 2 << ")\">" << esc(ylabel) << "</text>\n";
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

}  // namespace

void write_line_plot(const std::filesystem::path& path, const std::string& title, const std::string& xlabel,
                     const std::string& ylabel, const std::vector<Series>& series) {
  Range xr, yr;
  for (const auto& s : series) {
    for (double v : s.x) xr.add(v);
    for (double v : s.y) yr.add(v);
    for (double v : s.lo) yr.add(v);
    for (double v : s.hi) yr.add(v);
  }
  xr.settle();
  yr.settle();
  const double x0 = kLeft, x1 = kW - kRight, y0 = kH - kBottom, y1 = kTop;
  auto px = [&](double v) { return x0 + (v - xr.lo) / (xr.hi - xr.lo) * (x1 - x0); };
  auto py = [&](double v) { return y0 - (v - yr.lo) / (yr.hi - yr.lo) * (y0 - y1); };

  std::ostringstream os;
  frame(os, title, xlabel, ylabel, xr, yr, true);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kColors[k % 8];
    if (!s.lo.empty() && s.lo.size() == s.x.size() && s.hi.size() == s.x.size()) {
      std::ostringstream pts;
      for (std::size_t i = 0; i < s.x.size(); ++i)
        if (std::isfinite(s.hi[i])) pts << px(s.x[i]) << "," << py(s.hi[i]) << " ";
      for (std::size_t i = s.x.size(); i-- > 0;)
        if (std::isfinite(s.lo[i])) pts << px(s.x[i]) << "," << py(s.lo[i]) << " ";
      os << "<polygon points=\"" << pts.str() << "\" fill=\"" << color << "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
    }
    std::ostringstream pts;
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i)
      if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) pts << px(s.x[i]) << "," << py(s.y[i]) << " ";
    os << "<polyline points=\"" << pts.str() << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\""
       << (s.dashed ? " stroke-dasharray=\"5,3\"" : "") << "/>\n";
    const double ly = kTop + 14 * static_cast<double>(k);
    os << "<line x1=\"" << x1 + 10 << "\" y1=\"" << ly << "\" x2=\"" << x1 + 30 << "\" y2=\"" << ly << "\" stroke=\""
       << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << x1 + 35 << "\" y=\"" << ly + 4 << "\">" << esc(s.label) << "</text>\n";
  }
  os << "</svg>\n";
  write_file(path, os.str());
}

void write_bar_plot(const std::filesystem::path& path, const std::string& title, const std::string& ylabel,
                    const std::vector<Bar>& bars) {
  Range yr;
  yr.add(0.0);
  for (const auto& b : bars) {
    yr.add(b.value + b.err);
    yr.add(b.value - b.err);
  }
  yr.settle();
  Range xr;
  xr.add(0.0);
  xr.add(1.0);
  const double x0 = kLeft, x1 = kW - kRight, y0 = kH - kBottom, y1 = kTop;
  auto py = [&](double v) { return y0 - (v - yr.lo) / (yr.hi - yr.lo) * (y0 - y1); };
  std::ostringstream os;
  frame(os, title, "", ylabel, xr, yr, false);
  const double slot = (x1 - x0) / std::max<std::size_t>(bars.size(), 1);
  for (std::size_t k = 0; k < bars.size(); ++k) {
    const auto& b = bars[k];
    const double cx = x0 + slot * (static_cast<double>(k) + 0.5);
    const double top = std::isfinite(b.value) ? py(std::max(b.value, 0.0)) : py(0.0);
    const double bottom = std::isfinite(b.value) ? py(std::min(b.value, 0.0)) : py(0.0);
    os << "<rect x=\"" << cx - slot * 0.35 << "\" y=\"" << top << "\" width=\"" << slot * 0.7 << "\" height=\""
       << bottom - top << "\" fill=\"" << kColors[k % 8] << "\"/>\n";
    if (b.err > 0.0 && std::isfinite(b.value)) {
      os << "<line x1=\"" << cx << "\" y1=\"" << py(b.value - b.err) << "\" x2=\"" << cx << "\" y2=\""
         << py(b.value + b.err) << "\" stroke=\"black\"/>\n";
    }
    os << "<text x=\"" << cx << "\" y=\"" << y0 + 16 << "\" text-anchor=\"middle\">" << esc(b.label) << "</text>\n";
  }
  os << "</svg>\n";
  write_file(path, os.str());
}

}  // namespace seqprior
