#include "lgwae/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include "lgwae/errors.hpp"

namespace lgwae {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  std::string s = buf;
  if (s == "-0.00") s = "0.00";
  return s;
}

std::string header(double w, double h) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(w) + "\" height=\"" + num(h) + "\" viewBox=\"0 0 " +
         num(w) + " " + num(h) + "\">\n";
}

struct Canvas {
  double x0, y0, w, h;
  Point2 map(Point2 unit) const { return {x0 + unit.x * w, y0 + (1.0 - unit.y) * h}; }
};

void draw_centerline(std::string& out, const Centerline& c, const Canvas& cv, const RenderStyle& style,
                     const std::string& stroke, bool dashed) {
  const auto pts = sample_polyline(c, style.samples);
  out += "<polyline fill=\"none\" stroke=\"" + stroke + "\" stroke-width=\"" + num(style.stroke_width) + "\"";
  if (dashed) out += " stroke-dasharray=\"6 4\"";
  out += " points=\"";
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Point2 p = cv.map(pts[i]);
    if (i > 0) out += ' ';
    out += num(p.x) + "," + num(p.y);
  }
  out += "\"/>\n";

  // Arrowhead at the end, pointing along the last sample direction.
  const Point2 tip = cv.map(pts.back());
  const Point2 prev = cv.map(pts[pts.size() - 2]);
  double dx = tip.x - prev.x;
  double dy = tip.y - prev.y;
  const double len = std::hypot(dx, dy);
  if (len < 1e-12) return;
  dx /= len;
  dy /= len;
  const double s = style.arrow_size;
  const Point2 left{tip.x - s * dx - 0.5 * s * dy, tip.y - s * dy + 0.5 * s * dx};
  const Point2 right{tip.x - s * dx + 0.5 * s * dy, tip.y - s * dy - 0.5 * s * dx};
  out += "<polygon fill=\"" + stroke + "\" points=\"" + num(tip.x) + "," + num(tip.y) + " " + num(left.x) + "," +
         num(left.y) + " " + num(right.x) + "," + num(right.y) + "\"/>\n";
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void finish() {
    if (!(lo <= hi)) {
      lo = 0.0;
      hi = 1.0;
    }
    if (hi - lo < 1e-12) {
      lo -= 0.5;
      hi += 0.5;
    }
  }
};

const char* const kPalette[] = {"#1f5fbf", "#d95f02", "#1b9e77", "#7570b3", "#e7298a"};

struct Panel {
  double x, y, w, h;
  Range xr, yr;
  double px(double v) const { return x + (v - xr.lo) / (xr.hi - xr.lo) * w; }
  double py(double v) const { return y + h - (v - yr.lo) / (yr.hi - yr.lo) * h; }
};

void draw_axes(std::string& out, const Panel& p, const std::string& title, const std::string& xlabel) {
  out += "<rect x=\"" + num(p.x) + "\" y=\"" + num(p.y) + "\" width=\"" + num(p.w) + "\" height=\"" + num(p.h) +
         "\" fill=\"none\" stroke=\"#333333\"/>\n";
  out += "<text x=\"" + num(p.x) + "\" y=\"" + num(p.y - 8) + "\" font-size=\"13\" font-family=\"sans-serif\">" + title +
         "</text>\n";
  out += "<text x=\"" + num(p.x + p.w / 2) + "\" y=\"" + num(p.y + p.h + 32) +
         "\" font-size=\"11\" font-family=\"sans-serif\" text-anchor=\"middle\">" + xlabel + "</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = p.xr.lo + (p.xr.hi - p.xr.lo) * i / 4.0;
    const double fy = p.yr.lo + (p.yr.hi - p.yr.lo) * i / 4.0;
    out += "<text x=\"" + num(p.px(fx)) + "\" y=\"" + num(p.y + p.h + 15) +
           "\" font-size=\"10\" font-family=\"sans-serif\" text-anchor=\"middle\">" + num(fx) + "</text>\n";
    out += "<text x=\"" + num(p.x - 5) + "\" y=\"" + num(p.py(fy) + 3) +
           "\" font-size=\"10\" font-family=\"sans-serif\" text-anchor=\"end\">" + num(fy) + "</text>\n";
  }
}

void draw_curve(std::string& out, const Panel& p, const Curve& c, const std::string& color) {
  out += "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.5\" points=\"";
  for (std::size_t i = 0; i < c.x.size(); ++i) {
    if (i > 0) out += ' ';
    out += num(p.px(c.x[i])) + "," + num(p.py(c.y[i]));
  }
  out += "\"/>\n";
}

void draw_legend(std::string& out, const Panel& p, const std::vector<Curve>& curves) {
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const double y = p.y + 14 + 14 * static_cast<double>(i);
    const std::string color = kPalette[i % std::size(kPalette)];
    out += "<rect x=\"" + num(p.x + p.w - 90) + "\" y=\"" + num(y - 8) + "\" width=\"10\" height=\"10\" fill=\"" + color +
           "\"/>\n";
    out += "<text x=\"" + num(p.x + p.w - 75) + "\" y=\"" + num(y) + "\" font-size=\"11\" font-family=\"sans-serif\">" +
           curves[i].label + "</text>\n";
  }
}

}  // namespace

std::string render_svg(const LaneGraph& graph, const LaneGraph* overlay, const RenderStyle& style) {
  const double size = style.canvas;
  const Canvas cv{style.margin, style.margin, size - 2 * style.margin, size - 2 * style.margin};
  std::string out = header(size, size);
  out += "<rect x=\"0.00\" y=\"0.00\" width=\"" + num(size) + "\" height=\"" + num(size) + "\" fill=\"#ffffff\"/>\n";
  out += "<rect x=\"" + num(cv.x0) + "\" y=\"" + num(cv.y0) + "\" width=\"" + num(cv.w) + "\" height=\"" + num(cv.h) +
         "\" fill=\"none\" stroke=\"#333333\"/>\n";
  if (overlay != nullptr) {
    out += "<g class=\"overlay\">\n";
    for (const Centerline& c : overlay->centerlines) draw_centerline(out, c, cv, style, style.overlay_stroke, true);
    out += "</g>\n";
  }
  out += "<g class=\"graph\">\n";
  for (const Centerline& c : graph.centerlines) draw_centerline(out, c, cv, style, style.stroke, false);
  out += "</g>\n</svg>\n";
  return out;
}

Curve mean_objective_curve(const std::vector<RefinementReport>& reports) {
  Curve c;
  c.label = "objective";
  std::size_t longest = 0;
  for (const auto& r : reports) longest = std::max(longest, r.trace.size());
  for (std::size_t k = 0; k < longest; ++k) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : reports) {
      if (k < r.trace.size()) {
        sum += r.trace[k];
        ++n;
      }
    }
    c.x.push_back(static_cast<double>(k));
    c.y.push_back(sum / static_cast<double>(n));
  }
  return c;
}

std::vector<Curve> metric_curves(const std::vector<RefinementReport>& reports, const std::vector<LaneGraph>& gts,
                                 const MetricConfig& config) {
  if (reports.size() != gts.size()) throw DataError("metric_curves: report and ground-truth counts differ");
  struct Acc {
    double m_f = 0, detect = 0, c_f = 0;
    std::size_t n = 0;
  };
  std::map<std::size_t, Acc> by_iter;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    for (const Snapshot& s : reports[i].snapshots) {
      const SceneMetrics m = evaluate_scene(s.graph, gts[i], config);
      Acc& a = by_iter[s.iteration];
      a.m_f += m.m_f;
      a.detect += m.detect;
      a.c_f += m.c_f;
      ++a.n;
    }
  }
  std::vector<Curve> out{{"M-F", {}, {}}, {"Detect", {}, {}}, {"C-F", {}, {}}};
  for (const auto& [iter, a] : by_iter) {
    const double k = static_cast<double>(a.n);
    for (Curve& c : out) c.x.push_back(static_cast<double>(iter));
    out[0].y.push_back(a.m_f / k);
    out[1].y.push_back(a.detect / k);
    out[2].y.push_back(a.c_f / k);
  }
  return out;
}

std::string plot_convergence(const std::vector<RefinementReport>& reports, const std::vector<Curve>& metrics) {
  if (reports.empty()) throw DataError("plot_convergence: no refinement reports");
  const Curve objective = mean_objective_curve(reports);
  const bool two = !metrics.empty();
  const double width = two ? 1000.0 : 520.0;
  std::string out = header(width, 400.0);
  out += "<rect x=\"0.00\" y=\"0.00\" width=\"" + num(width) + "\" height=\"400.00\" fill=\"#ffffff\"/>\n";

  Panel p{60, 40, 420, 300, {}, {}};
  for (std::size_t i = 0; i < objective.x.size(); ++i) {
    p.xr.add(objective.x[i]);
    p.yr.add(objective.y[i]);
  }
  p.xr.finish();
  p.yr.finish();
  draw_axes(out, p, "mean objective (" + std::to_string(reports.size()) + " scenes)", "iteration");
  draw_curve(out, p, objective, kPalette[0]);

  if (two) {
    Panel q{560, 40, 420, 300, {}, {}};
    for (const Curve& c : metrics) {
      for (std::size_t i = 0; i < c.x.size(); ++i) {
        q.xr.add(c.x[i]);
        q.yr.add(c.y[i]);
      }
    }
    q.xr.finish();
    q.yr.finish();
    draw_axes(out, q, "mean metric vs iteration", "iteration");
    for (std::size_t i = 0; i < metrics.size(); ++i) draw_curve(out, q, metrics[i], kPalette[i % std::size(kPalette)]);
    draw_legend(out, q, metrics);
  }
  out += "</svg>\n";
  return out;
}

std::string plot_uncertainty(const UncertaintyAnalysis& a) {
  if (a.uncertainty.empty()) throw DataError("plot_uncertainty: empty analysis");
  std::string out = header(520.0, 400.0);
  out += "<rect x=\"0.00\" y=\"0.00\" width=\"520.00\" height=\"400.00\" fill=\"#ffffff\"/>\n";
  Panel p{60, 40, 420, 300, {}, {}};
  for (double u : a.uncertainty) p.xr.add(u);
  p.yr.add(0.0);
  p.yr.add(100.0);
  p.xr.finish();
  p.yr.finish();
  draw_axes(out, p, "M-F vs reconstruction error (rho " + num(a.rho_m_f) + ")", "reconstruction error");
  for (std::size_t i = 0; i < a.uncertainty.size(); ++i) {
    out += "<circle cx=\"" + num(p.px(a.uncertainty[i])) + "\" cy=\"" + num(p.py(a.rows[i].m_f)) +
           "\" r=\"2.50\" fill=\"#1f5fbf\" fill-opacity=\"0.6\"/>\n";
  }
  Curve bins{"bin mean", {}, {}};
  for (const HistogramBin& b : a.bins) {
    if (b.count == 0) continue;
    bins.x.push_back(0.5 * (b.lo + b.hi));
    bins.y.push_back(b.mean_m_f);
  }
  if (!bins.x.empty()) draw_curve(out, p, bins, "#d95f02");
  out += "</svg>\n";
  return out;
}

}  // namespace lgwae
