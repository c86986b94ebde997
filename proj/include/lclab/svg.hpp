// svg.hpp - minimal deterministic SVG plots: log-log decay series with a
// power-law guide line, and time series under a constant envelope. Standalone
// documents with the plotted data embedded as comments; no timestamps, no
// external references.
#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "lclab/core.hpp"

namespace lclab {

namespace detail {

inline std::string svg_num(double v) {
  // pixel coordinates rounded for tidiness; rounding keeps output deterministic
  return to_string_shortest(std::round(v * 100.0) / 100.0);
}

struct PlotFrame {
  double width = 640.0, height = 420.0;
  double left = 64.0, right = 20.0, top = 28.0, bottom = 44.0;
  double x_lo = 0.0, x_hi = 1.0, y_lo = 0.0, y_hi = 1.0;  // data coordinates

  double px(double x) const {
    double span = x_hi - x_lo;
    double f = span > 0.0 ? (x - x_lo) / span : 0.5;
    return left + f * (width - left - right);
  }
  double py(double y) const {
    double span = y_hi - y_lo;
    double f = span > 0.0 ? (y - y_lo) / span : 0.5;
    return height - bottom - f * (height - top - bottom);
  }
};

inline std::string svg_open(const PlotFrame& fr, const std::string& title) {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + svg_num(fr.width) +
                  "\" height=\"" + svg_num(fr.height) + "\" viewBox=\"0 0 " + svg_num(fr.width) +
                  " " + svg_num(fr.height) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + svg_num(fr.width / 2) +
       "\" y=\"18\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"13\">" + title +
       "</text>\n";
  return s;
}

inline std::string svg_axes(const PlotFrame& fr, const std::string& x_label,
                            const std::string& y_label) {
  std::string s;
  s += "<rect x=\"" + svg_num(fr.left) + "\" y=\"" + svg_num(fr.top) + "\" width=\"" +
       svg_num(fr.width - fr.left - fr.right) + "\" height=\"" +
       svg_num(fr.height - fr.top - fr.bottom) +
       "\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n";
  s += "<text x=\"" + svg_num((fr.left + fr.width - fr.right) / 2) + "\" y=\"" +
       svg_num(fr.height - 10) +
       "\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"11\">" + x_label +
       "</text>\n";
  s += "<text x=\"14\" y=\"" + svg_num((fr.top + fr.height - fr.bottom) / 2) +
       "\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"11\" transform=\"rotate(-90 14 " +
       svg_num((fr.top + fr.height - fr.bottom) / 2) + ")\">" + y_label + "</text>\n";
  return s;
}

inline std::string svg_tick_x(const PlotFrame& fr, double x, const std::string& label) {
  double p = fr.px(x), base = fr.height - fr.bottom;
  return "<line x1=\"" + svg_num(p) + "\" y1=\"" + svg_num(base) + "\" x2=\"" + svg_num(p) +
         "\" y2=\"" + svg_num(base + 5) + "\" stroke=\"black\" stroke-width=\"1\"/>\n<text x=\"" +
         svg_num(p) + "\" y=\"" + svg_num(base + 17) +
         "\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"10\">" + label +
         "</text>\n";
}

inline std::string svg_tick_y(const PlotFrame& fr, double y, const std::string& label) {
  double p = fr.py(y);
  return "<line x1=\"" + svg_num(fr.left - 5) + "\" y1=\"" + svg_num(p) + "\" x2=\"" +
         svg_num(fr.left) + "\" y2=\"" + svg_num(p) +
         "\" stroke=\"black\" stroke-width=\"1\"/>\n<text x=\"" + svg_num(fr.left - 8) +
         "\" y=\"" + svg_num(p + 3) +
         "\" text-anchor=\"end\" font-family=\"monospace\" font-size=\"10\">" + label +
         "</text>\n";
}

inline std::string svg_polyline(const PlotFrame& fr, const std::vector<double>& xs,
                                const std::vector<double>& ys, const std::string& color,
                                const std::string& dash = "") {
  std::string s = "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.5\"";
  if (!dash.empty()) s += " stroke-dasharray=\"" + dash + "\"";
  s += " points=\"";
  for (size_t i = 0; i < xs.size(); ++i) {
    if (i) s += ' ';
    s += svg_num(fr.px(xs[i])) + "," + svg_num(fr.py(ys[i]));
  }
  s += "\"/>\n";
  return s;
}

// data embedded as an XML comment; numeric content never produces "--"
inline std::string svg_data_comment(const std::string& label, const std::vector<double>& xs,
                                    const std::vector<double>& ys) {
  std::string s = "<!-- data " + label + "\n";
  for (size_t i = 0; i < xs.size(); ++i)
    s += to_string_shortest(xs[i]) + " " + to_string_shortest(ys[i]) + "\n";
  s += "-->\n";
  return s;
}

inline std::string svg_note(const PlotFrame& fr, const std::string& text) {
  return "<text x=\"" + svg_num(fr.width / 2) + "\" y=\"" +
         svg_num((fr.top + fr.height - fr.bottom) / 2) +
         "\" text-anchor=\"middle\" font-family=\"monospace\" font-size=\"12\">" + text +
         "</text>\n";
}

}  // namespace detail

// Tail mass against time on log-log axes with the t^{-order} reference line
// anchored at level `guide_c`. Non-positive samples cannot be drawn on a log
// axis; they are kept in the data comment but omitted from the curve.
inline std::string svg_loglog_decay(const std::string& title, const std::vector<double>& times,
                                    const std::vector<double>& values, int guide_order,
                                    double guide_c) {
  if (times.size() != values.size())
    throw invalid_argument_error("svg_loglog_decay: size mismatch");
  detail::PlotFrame fr;
  std::vector<double> lx, ly;
  for (size_t i = 0; i < times.size(); ++i)
    if (times[i] > 0.0 && values[i] > 0.0) {
      lx.push_back(std::log10(times[i]));
      ly.push_back(std::log10(values[i]));
    }

  std::string body = detail::svg_data_comment("tail_mass", times, values);
  if (lx.size() < 2) {
    body += detail::svg_open(fr, title);
    body += detail::svg_note(fr, "fewer than two positive samples");
    body += "</svg>\n";
    return body;
  }

  fr.x_lo = *std::min_element(lx.begin(), lx.end());
  fr.x_hi = *std::max_element(lx.begin(), lx.end());
  fr.y_lo = *std::min_element(ly.begin(), ly.end());
  fr.y_hi = *std::max_element(ly.begin(), ly.end());
  // include the guide line's endpoints in the vertical range
  if (guide_c > 0.0) {
    double g_lo = std::log10(guide_c) - guide_order * fr.x_hi;
    double g_hi = std::log10(guide_c) - guide_order * fr.x_lo;
    fr.y_lo = std::min(fr.y_lo, std::min(g_lo, g_hi));
    fr.y_hi = std::max(fr.y_hi, std::max(g_lo, g_hi));
  }
  double pad_x = 0.05 * std::max(1e-9, fr.x_hi - fr.x_lo);
  double pad_y = 0.05 * std::max(1e-9, fr.y_hi - fr.y_lo);
  fr.x_lo -= pad_x, fr.x_hi += pad_x, fr.y_lo -= pad_y, fr.y_hi += pad_y;

  std::string head = detail::svg_open(fr, title);
  head += detail::svg_axes(fr, "log10 t", "log10 tail mass");
  for (double d = std::ceil(fr.x_lo); d <= std::floor(fr.x_hi) + 1e-12; d += 1.0)
    head += detail::svg_tick_x(fr, d, to_string_shortest(d));
  for (double d = std::ceil(fr.y_lo); d <= std::floor(fr.y_hi) + 1e-12; d += 1.0)
    head += detail::svg_tick_y(fr, d, to_string_shortest(d));

  if (guide_c > 0.0) {
    std::vector<double> gx = {fr.x_lo + pad_x, fr.x_hi - pad_x};
    std::vector<double> gy = {std::log10(guide_c) - guide_order * gx[0],
                              std::log10(guide_c) - guide_order * gx[1]};
    head += detail::svg_polyline(fr, gx, gy, "gray", "6 4");
    head += "<text x=\"" + detail::svg_num(fr.px(gx[1]) - 4) + "\" y=\"" +
            detail::svg_num(fr.py(gy[1]) - 6) +
            "\" text-anchor=\"end\" font-family=\"monospace\" font-size=\"10\" fill=\"gray\">slope -" +
            std::to_string(guide_order) + "</text>\n";
  }
  head += detail::svg_polyline(fr, lx, ly, "crimson");
  head += "</svg>\n";
  return body + head;
}

// ASTLO expectation against time with the constant monotone envelope drawn as
// a dashed horizontal line.
inline std::string svg_envelope(const std::string& title, const std::vector<double>& times,
                                const std::vector<double>& lhs, double bound) {
  if (times.size() != lhs.size()) throw invalid_argument_error("svg_envelope: size mismatch");
  detail::PlotFrame fr;
  std::string body = detail::svg_data_comment("envelope", times, lhs);
  if (times.size() < 2) {
    body += detail::svg_open(fr, title);
    body += detail::svg_note(fr, "fewer than two samples");
    body += "</svg>\n";
    return body;
  }

  fr.x_lo = *std::min_element(times.begin(), times.end());
  fr.x_hi = *std::max_element(times.begin(), times.end());
  fr.y_lo = std::min(0.0, *std::min_element(lhs.begin(), lhs.end()));
  fr.y_hi = std::max(bound, *std::max_element(lhs.begin(), lhs.end()));
  double pad_y = 0.08 * std::max(1e-12, fr.y_hi - fr.y_lo);
  fr.y_lo -= pad_y, fr.y_hi += pad_y;

  std::string head = detail::svg_open(fr, title);
  head += detail::svg_axes(fr, "t", "expectation");
  for (int k = 0; k <= 4; ++k) {
    double x = fr.x_lo + (fr.x_hi - fr.x_lo) * k / 4.0;
    double y = fr.y_lo + (fr.y_hi - fr.y_lo) * k / 4.0;
    head += detail::svg_tick_x(fr, x, to_string_shortest(std::round(x * 1000.0) / 1000.0));
    head += detail::svg_tick_y(fr, y, to_string_shortest(std::round(y * 10000.0) / 10000.0));
  }
  head += detail::svg_polyline(fr, {fr.x_lo, fr.x_hi}, {bound, bound}, "gray", "6 4");
  head += "<text x=\"" + detail::svg_num(fr.px(fr.x_hi) - 4) + "\" y=\"" +
          detail::svg_num(fr.py(bound) - 6) +
          "\" text-anchor=\"end\" font-family=\"monospace\" font-size=\"10\" fill=\"gray\">envelope</text>\n";
  head += detail::svg_polyline(fr, times, lhs, "steelblue");
  head += "</svg>\n";
  return body + head;
}

}  // namespace lclab
