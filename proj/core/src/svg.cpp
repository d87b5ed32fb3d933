#include "memenc/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "memenc/blob.hpp"
#include "memenc/error.hpp"

namespace memenc {

namespace {

const char* kPalette[] = {"#3366cc", "#dc3912", "#ff9900", "#109618",
                          "#990099", "#0099c6", "#dd4477", "#66aa00"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

// "Nice" tick step covering the span with about n intervals.
double tick_step(double span, int n) {
  if (span <= 0.0) return 1.0;
  const double raw = span / n;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double m : {1.0, 2.0, 2.5, 5.0, 10.0}) {
    if (raw <= m * mag) return m * mag;
  }
  return 10.0 * mag;
}

}  // namespace

SvgChart::SvgChart(int width, int height, std::string title)
    : width_(width), height_(height), title_(std::move(title)) {}

void SvgChart::set_axis_labels(std::string x_label, std::string y_label) {
  x_label_ = std::move(x_label);
  y_label_ = std::move(y_label);
}

void SvgChart::set_y_range(double lo, double hi) {
  if (!(hi > lo)) throw ConfigError("svg: y range must be increasing");
  fixed_y_ = true;
  y_lo_ = lo;
  y_hi_ = hi;
}

void SvgChart::add_line(const std::vector<double>& xs, const std::vector<double>& ys,
                        const std::string& name) {
  if (xs.size() != ys.size()) throw ConfigError("svg: x/y length mismatch");
  if (xs.empty()) throw ConfigError("svg: empty series");
  lines_.push_back(Series{xs, ys, name});
}

void SvgChart::add_bars(const std::vector<std::string>& labels, const std::vector<double>& values,
                        const std::string& name) {
  if (labels.size() != values.size()) throw ConfigError("svg: bar label/value length mismatch");
  if (labels.empty()) throw ConfigError("svg: empty bar series");
  bars_.push_back(Bars{labels, values, name});
}

void SvgChart::add_vline(double x, const std::string& name) { vlines_.emplace_back(x, name); }

std::string SvgChart::render() const {
  const double ml = 64, mr = 16, mt = 36, mb = 48;  // margins
  const double pw = width_ - ml - mr, ph = height_ - mt - mb;

  double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
  double y_lo = std::numeric_limits<double>::infinity(), y_hi = -y_lo;
  for (const Series& s : lines_) {
    for (double x : s.xs) { x_lo = std::min(x_lo, x); x_hi = std::max(x_hi, x); }
    for (double y : s.ys) { y_lo = std::min(y_lo, y); y_hi = std::max(y_hi, y); }
  }
  int n_bars = 0;
  for (const Bars& b : bars_) {
    n_bars = std::max(n_bars, static_cast<int>(b.values.size()));
    for (double y : b.values) { y_lo = std::min(y_lo, y); y_hi = std::max(y_hi, y); }
  }
  if (lines_.empty() && bars_.empty()) {
    x_lo = 0; x_hi = 1; y_lo = 0; y_hi = 1;
  }
  if (!lines_.empty() && !(x_hi > x_lo)) { x_lo -= 0.5; x_hi += 0.5; }
  if (lines_.empty()) { x_lo = 0; x_hi = std::max(1, n_bars); }
  if (fixed_y_) {
    y_lo = y_lo_;
    y_hi = y_hi_;
  } else {
    if (!(y_hi > y_lo)) { y_lo -= 0.5; y_hi += 0.5; }
    const double pad = 0.06 * (y_hi - y_lo);
    y_lo -= pad;
    y_hi += pad;
    if (y_lo > 0.0 && y_lo < 0.3 * (y_hi - y_lo)) y_lo = 0.0;  // anchor near-zero floors
  }

  auto px = [&](double x) { return ml + (x - x_lo) / (x_hi - x_lo) * pw; };
  auto py = [&](double y) { return mt + ph - (y - y_lo) / (y_hi - y_lo) * ph; };

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width_) +
       "\" height=\"" + std::to_string(height_) + "\" viewBox=\"0 0 " + std::to_string(width_) +
       " " + std::to_string(height_) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + fmt(width_ / 2.0) +
       "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" +
       escape(title_) + "</text>\n";

  // frame and ticks
  s += "<rect x=\"" + fmt(ml) + "\" y=\"" + fmt(mt) + "\" width=\"" + fmt(pw) + "\" height=\"" +
       fmt(ph) + "\" fill=\"none\" stroke=\"#333\"/>\n";
  const double ys_step = tick_step(y_hi - y_lo, 5);
  for (double ty = std::ceil(y_lo / ys_step) * ys_step; ty <= y_hi + 1e-12; ty += ys_step) {
    s += "<line x1=\"" + fmt(ml) + "\" y1=\"" + fmt(py(ty)) + "\" x2=\"" + fmt(ml + pw) +
         "\" y2=\"" + fmt(py(ty)) + "\" stroke=\"#ddd\"/>\n";
    s += "<text x=\"" + fmt(ml - 6) + "\" y=\"" + fmt(py(ty) + 4) +
         "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + fmt(ty) +
         "</text>\n";
  }
  if (!lines_.empty() || !vlines_.empty()) {
    const double xs_step = tick_step(x_hi - x_lo, 8);
    for (double tx = std::ceil(x_lo / xs_step) * xs_step; tx <= x_hi + 1e-12; tx += xs_step) {
      s += "<text x=\"" + fmt(px(tx)) + "\" y=\"" + fmt(mt + ph + 16) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" + fmt(tx) +
           "</text>\n";
    }
  }

  // bars first so lines draw on top
  int color = 0;
  for (const Bars& b : bars_) {
    const std::string fill = kPalette[color++ % 8];
    const int n = static_cast<int>(b.values.size());
    const double slot = pw / n;
    for (int i = 0; i < n; ++i) {
      const double v = b.values[static_cast<std::size_t>(i)];
      const double y0 = py(std::max(0.0, std::min(v, y_hi)));
      const double base = py(std::max(y_lo, std::min(0.0, y_hi)));
      const double top = std::min(y0, base), h = std::fabs(base - y0);
      s += "<rect x=\"" + fmt(ml + slot * i + slot * 0.15) + "\" y=\"" + fmt(top) +
           "\" width=\"" + fmt(slot * 0.7) + "\" height=\"" + fmt(h) + "\" fill=\"" + fill +
           "\" fill-opacity=\"0.85\"/>\n";
      s += "<text x=\"" + fmt(ml + slot * (i + 0.5)) + "\" y=\"" + fmt(mt + ph + 16) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" +
           escape(b.labels[static_cast<std::size_t>(i)]) + "</text>\n";
    }
  }

  for (const Series& line : lines_) {
    const std::string stroke = kPalette[color++ % 8];
    std::string pts;
    for (std::size_t i = 0; i < line.xs.size(); ++i) {
      pts += fmt(px(line.xs[i])) + "," + fmt(py(std::clamp(line.ys[i], y_lo, y_hi))) + " ";
    }
    s += "<polyline fill=\"none\" stroke=\"" + stroke + "\" stroke-width=\"1.5\" points=\"" +
         pts + "\"/>\n";
  }
  for (const auto& [x, name] : vlines_) {
    s += "<line x1=\"" + fmt(px(x)) + "\" y1=\"" + fmt(mt) + "\" x2=\"" + fmt(px(x)) +
         "\" y2=\"" + fmt(mt + ph) +
         "\" stroke=\"#555\" stroke-dasharray=\"4 3\"/>\n";
    s += "<text x=\"" + fmt(px(x) + 4) + "\" y=\"" + fmt(mt + 12) +
         "\" font-family=\"sans-serif\" font-size=\"10\">" + escape(name) + "</text>\n";
  }

  // legend
  double ly = mt + 8;
  int ci = static_cast<int>(bars_.size());
  for (const Series& line : lines_) {
    const std::string stroke = kPalette[ci++ % 8];
    s += "<line x1=\"" + fmt(ml + pw - 110) + "\" y1=\"" + fmt(ly) + "\" x2=\"" +
         fmt(ml + pw - 90) + "\" y2=\"" + fmt(ly) + "\" stroke=\"" + stroke +
         "\" stroke-width=\"2\"/>\n";
    s += "<text x=\"" + fmt(ml + pw - 84) + "\" y=\"" + fmt(ly + 4) +
         "\" font-family=\"sans-serif\" font-size=\"11\">" + escape(line.name) + "</text>\n";
    ly += 16;
  }

  if (!x_label_.empty()) {
    s += "<text x=\"" + fmt(ml + pw / 2) + "\" y=\"" + fmt(height_ - 8) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" +
         escape(x_label_) + "</text>\n";
  }
  if (!y_label_.empty()) {
    s += "<text x=\"14\" y=\"" + fmt(mt + ph / 2) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 14 " +
         fmt(mt + ph / 2) + ")\">" + escape(y_label_) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

void SvgChart::write(const std::filesystem::path& path) const {
  write_text_file(path, render());
}

}  // namespace memenc
