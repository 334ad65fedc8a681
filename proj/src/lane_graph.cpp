#include "lgwae/lane_graph.hpp"

#include <cmath>
#include <stdexcept>

#include "lgwae/errors.hpp"

namespace lgwae {

double distance(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

void BevExtent::check() const {
  if (!(x_min < x_max) || !(z_min < z_max)) throw ConfigError("BEV extent is degenerate");
}

bool BevExtent::contains(Point2 p) const { return p.x >= x_min && p.x <= x_max && p.y >= z_min && p.y <= z_max; }

Point2 normalize(Point2 meters, const BevExtent& extent) {
  extent.check();
  return {(meters.x - extent.x_min) / (extent.x_max - extent.x_min),
          (meters.y - extent.z_min) / (extent.z_max - extent.z_min)};
}

Point2 denormalize(Point2 unit, const BevExtent& extent) {
  extent.check();
  return {extent.x_min + unit.x * (extent.x_max - extent.x_min), extent.z_min + unit.y * (extent.z_max - extent.z_min)};
}

std::size_t Incidence::edge_count() const {
  std::size_t n = 0;
  for (auto b : bits_) n += b;
  return n;
}

std::vector<std::pair<std::size_t, std::size_t>> Incidence::edges() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = 0; j < n_; ++j) {
      if ((*this)(i, j)) out.emplace_back(i, j);
    }
  }
  return out;
}

Point2 bezier_point(std::span<const Point2> cps, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw std::domain_error("bezier_point: t outside [0,1]");
  if (cps.empty()) throw std::invalid_argument("bezier_point: no control points");
  const std::size_t n = cps.size() - 1;
  Point2 out{0.0, 0.0};
  double binom = 1.0;
  for (std::size_t i = 0; i <= n; ++i) {
    const double w = binom * std::pow(t, static_cast<double>(i)) * std::pow(1.0 - t, static_cast<double>(n - i));
    out.x += w * cps[i].x;
    out.y += w * cps[i].y;
    binom = binom * static_cast<double>(n - i) / static_cast<double>(i + 1);
  }
  return out;
}

std::vector<Point2> sample_polyline(const Centerline& centerline, std::size_t n_samples) {
  if (n_samples < 2) throw std::invalid_argument("sample_polyline: need at least 2 samples");
  std::vector<Point2> out(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    out[i] = bezier_point(centerline.control_points, static_cast<double>(i) / static_cast<double>(n_samples - 1));
  }
  return out;
}

Incidence derive_incidence(const LaneGraph& graph, double tolerance) {
  const std::size_t n = graph.size();
  Incidence a(n);
  for (std::size_t x = 0; x < n; ++x) {
    for (std::size_t y = 0; y < n; ++y) {
      if (x != y && distance(graph.centerlines[x].end(), graph.centerlines[y].start()) <= tolerance) a.set(x, y);
    }
  }
  return a;
}

std::vector<Violation> validate(const LaneGraph& graph, const ValidateOptions& options) {
  std::vector<Violation> out;
  const std::size_t n = graph.size();
  const std::size_t degree = graph.degree();
  for (std::size_t i = 0; i < n; ++i) {
    const Centerline& c = graph.centerlines[i];
    const std::string id = "centerline " + std::to_string(i);
    if (c.control_points.size() < 2 || c.control_points.size() != degree) {
      out.push_back({Violation::Kind::degree, id + " has " + std::to_string(c.control_points.size()) +
                                                  " control points, expected " + std::to_string(degree) + " (>= 2)"});
    }
    for (const Point2& p : c.control_points) {
      if (!(p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0)) {
        out.push_back({Violation::Kind::coordinate_range, id + " has a control point outside the unit square"});
        break;
      }
    }
    if (!(c.existence >= 0.0 && c.existence <= 1.0)) {
      out.push_back({Violation::Kind::existence_range, id + " existence outside [0,1]"});
    }
  }
  if (graph.incidence.size() != n) {
    out.push_back({Violation::Kind::incidence_size, "incidence is " + std::to_string(graph.incidence.size()) +
                                                        " square for " + std::to_string(n) + " centerlines"});
    return out;
  }
  for (std::size_t x = 0; x < n; ++x) {
    if (graph.incidence(x, x)) out.push_back({Violation::Kind::self_loop, "self loop on centerline " + std::to_string(x)});
  }
  if (options.ground_truth) {
    for (auto [x, y] : graph.incidence.edges()) {
      if (x == y || graph.centerlines[x].control_points.empty() || graph.centerlines[y].control_points.empty()) continue;
      const double gap = distance(graph.centerlines[x].end(), graph.centerlines[y].start());
      if (gap > options.tolerance) {
        out.push_back({Violation::Kind::endpoint_gap, "edge " + std::to_string(x) + "->" + std::to_string(y) +
                                                          " has endpoint gap " + std::to_string(gap)});
      }
    }
  }
  return out;
}

LaneGraph filter_existing(const LaneGraph& graph, double threshold) {
  LaneGraph out;
  out.extent = graph.extent;
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < graph.size(); ++i) {
    if (graph.centerlines[i].existence >= threshold) {
      kept.push_back(i);
      out.centerlines.push_back(graph.centerlines[i]);
    }
  }
  out.incidence = Incidence(kept.size());
  if (graph.incidence.size() == graph.size()) {
    for (std::size_t a = 0; a < kept.size(); ++a) {
      for (std::size_t b = 0; b < kept.size(); ++b) {
        if (graph.incidence(kept[a], kept[b])) out.incidence.set(a, b);
      }
    }
  }
  return out;
}

}  // namespace lgwae
