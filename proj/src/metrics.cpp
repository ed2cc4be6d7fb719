#include "backdrop/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "backdrop/format_error.hpp"

namespace backdrop {

std::string format_metric_value(double v) { return fmt::format("{:.17g}", v); }

double MetricsLog::last(const std::string& split, const std::string& metric) const {
  for (auto it = rows_.rbegin(); it != rows_.rend(); ++it)
    if (it->split == split && it->metric == metric) return it->value;
  throw std::out_of_range("no metric " + split + "/" + metric);
}

bool MetricsLog::has(const std::string& split, const std::string& metric) const {
  return std::any_of(rows_.begin(), rows_.end(),
                     [&](const MetricRow& r) { return r.split == split && r.metric == metric; });
}

std::string MetricsLog::csv() const {
  std::string out = "epoch,split,metric,value\n";
  for (const auto& r : rows_) out += fmt::format("{},{},{},{}\n", r.epoch, r.split, r.metric, format_metric_value(r.value));
  return out;
}

void MetricsLog::write_csv(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  os << csv();
}

MetricsLog MetricsLog::read_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(is, line) || line != "epoch,split,metric,value") throw FormatError(path + ": missing metrics header");
  MetricsLog log;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string epoch, split, metric, value;
    if (!std::getline(ss, epoch, ',') || !std::getline(ss, split, ',') || !std::getline(ss, metric, ',') ||
        !std::getline(ss, value)) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected 4 fields");
    }
    try {
      log.add(std::stoul(epoch), split, metric, std::stod(value));
    } catch (const std::exception&) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": bad number");
    }
  }
  return log;
}

namespace {

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Round step (1, 2 or 5 times a power of ten) giving about `target` ticks.
double nice_step(double span, int target) {
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 5.0})
    if (m * mag >= raw) return m * mag;
  return 10.0 * mag;
}

}  // namespace

std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                          const std::vector<PlotSeries>& series) {
  constexpr double W = 640, H = 400, L = 70, R = 150, T = 40, B = 50;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw std::invalid_argument("plot series '" + s.name + "': x and y differ in length");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x0 -= 0.5, x1 += 0.5;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};
  std::ostringstream os;
  os << fmt::format(R"(<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="12">)",
                    W, H)
     << "\n";
  os << fmt::format(R"(<rect width="{}" height="{}" fill="white"/>)", W, H) << "\n";
  os << fmt::format(R"(<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>)", (L + W - R) / 2,
                    escape(title))
     << "\n";
  os << fmt::format(R"(<line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="black"/>)", L, H - B, W - R) << "\n";
  os << fmt::format(R"(<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="black"/>)", L, T, H - B) << "\n";
  const double xs = nice_step(x1 - x0, 6), ys = nice_step(y1 - y0, 5);
  for (double t = std::ceil(x0 / xs) * xs; t <= x1 + 1e-9 * xs; t += xs) {
    os << fmt::format(R"(<line x1="{0:.1f}" y1="{1}" x2="{0:.1f}" y2="{2}" stroke="black"/>)", px(t), H - B, H - B + 4)
       << fmt::format(R"(<text x="{:.1f}" y="{}" text-anchor="middle">{:g}</text>)", px(t), H - B + 17, t) << "\n";
  }
  for (double t = std::ceil(y0 / ys) * ys; t <= y1 + 1e-9 * ys; t += ys) {
    os << fmt::format(R"(<line x1="{0}" y1="{1:.1f}" x2="{2}" y2="{1:.1f}" stroke="#ddd"/>)", L, py(t), W - R)
       << fmt::format(R"(<text x="{}" y="{:.1f}" text-anchor="end">{:.4g}</text>)", L - 6, py(t) + 4, t) << "\n";
  }
  os << fmt::format(R"(<text x="{}" y="{}" text-anchor="middle">{}</text>)", (L + W - R) / 2, H - 12, escape(x_label))
     << "\n";
  os << fmt::format(R"svg(<text transform="translate(16,{}) rotate(-90)" text-anchor="middle">{}</text>)svg", (T + H - B) / 2,
                    escape(y_label))
     << "\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = colors[k % std::size(colors)];
    std::string points;
    for (std::size_t i = 0; i < series[k].x.size(); ++i) {
      if (!std::isfinite(series[k].y[i])) continue;
      points += fmt::format("{:.1f},{:.1f} ", px(series[k].x[i]), py(series[k].y[i]));
    }
    os << fmt::format(R"(<polyline fill="none" stroke="{}" stroke-width="2" points="{}"/>)", color, points) << "\n";
    const double ly = T + 10 + 18 * static_cast<double>(k);
    os << fmt::format(R"(<line x1="{0}" y1="{1}" x2="{2}" y2="{1}" stroke="{3}" stroke-width="2"/>)", W - R + 10, ly,
                      W - R + 30, color)
       << fmt::format(R"(<text x="{}" y="{}">{}</text>)", W - R + 36, ly + 4, escape(series[k].name)) << "\n";
  }
  os << "</svg>\n";
  return os.str();
}

void write_svg_line_plot(const std::string& path, const std::string& title, const std::string& x_label,
                         const std::string& y_label, const std::vector<PlotSeries>& series) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  os << svg_line_plot(title, x_label, y_label, series);
}

}  // namespace backdrop
