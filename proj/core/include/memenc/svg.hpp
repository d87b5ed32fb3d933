#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace memenc {

// Tiny hand-rolled SVG chart writer, enough for score-vs-lag panels and ROI
// bars. No external renderer assumptions; output is a standalone .svg file.
class SvgChart {
 public:
  SvgChart(int width, int height, std::string title);

  void set_axis_labels(std::string x_label, std::string y_label);
  // Fixed y range; otherwise computed from the data with padding.
  void set_y_range(double lo, double hi);

  void add_line(const std::vector<double>& xs, const std::vector<double>& ys,
                const std::string& name);
  void add_bars(const std::vector<std::string>& labels, const std::vector<double>& values,
                const std::string& name);
  // Vertical marker (e.g. a detected period), drawn dashed.
  void add_vline(double x, const std::string& name);

  std::string render() const;
  void write(const std::filesystem::path& path) const;

 private:
  struct Series {
    std::vector<double> xs, ys;
    std::string name;
  };
  struct Bars {
    std::vector<std::string> labels;
    std::vector<double> values;
    std::string name;
  };

  int width_, height_;
  std::string title_, x_label_, y_label_;
  bool fixed_y_ = false;
  double y_lo_ = 0.0, y_hi_ = 1.0;
  std::vector<Series> lines_;
  std::vector<Bars> bars_;
  std::vector<std::pair<double, std::string>> vlines_;
};

}  // namespace memenc
