#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace backdrop {

struct MetricRow {
  std::size_t epoch = 0;
  std::string split;   // train | test
  std::string metric;  // e.g. loss, accuracy, auc, ebs.p_s
  double value = 0;
};

class MetricsLog {
 public:
  void add(std::size_t epoch, const std::string& split, const std::string& metric, double value) {
    rows_.push_back({epoch, split, metric, value});
  }
  const std::vector<MetricRow>& rows() const { return rows_; }

  // Last value of (split, metric); throws if absent.
  double last(const std::string& split, const std::string& metric) const;
  bool has(const std::string& split, const std::string& metric) const;

  // Header epoch,split,metric,value; values printed with 17 significant digits.
  std::string csv() const;
  void write_csv(const std::string& path) const;
  static MetricsLog read_csv(const std::string& path);

 private:
  std::vector<MetricRow> rows_;
};

std::string format_metric_value(double v);

struct PlotSeries {
  std::string name;
  std::vector<double> x, y;
};

// Static SVG line chart with axes, ticks and a legend.
std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                          const std::vector<PlotSeries>& series);
void write_svg_line_plot(const std::string& path, const std::string& title, const std::string& x_label,
                         const std::string& y_label, const std::vector<PlotSeries>& series);

}  // namespace backdrop
