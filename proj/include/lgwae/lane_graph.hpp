#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace lgwae {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

double distance(Point2 a, Point2 b);

/// Metric BEV window; x is lateral, z is forward from the ego vehicle.
struct BevExtent {
  double x_min = -25.0;
  double x_max = 25.0;
  double z_min = 1.0;
  double z_max = 50.0;

  /// Throws ConfigError unless x_min < x_max and z_min < z_max.
  void check() const;
  bool contains(Point2 meters) const;

  friend bool operator==(const BevExtent&, const BevExtent&) = default;
};

/// Meters -> unit square. Points outside the extent map outside [0,1].
Point2 normalize(Point2 meters, const BevExtent& extent);
Point2 denormalize(Point2 unit, const BevExtent& extent);

/// One lane centerline as a Bezier curve in normalized coordinates.
struct Centerline {
  std::vector<Point2> control_points;
  double existence = 1.0;
  std::vector<double> assoc_feature;

  Point2 start() const { return control_points.front(); }
  Point2 end() const { return control_points.back(); }
};

/// Square boolean matrix; entry (from, to) marks a directed edge.
class Incidence {
 public:
  Incidence() = default;
  explicit Incidence(std::size_t n) : n_(n), bits_(n * n, 0) {}

  std::size_t size() const { return n_; }
  bool operator()(std::size_t from, std::size_t to) const { return bits_[from * n_ + to] != 0; }
  void set(std::size_t from, std::size_t to, bool value = true) { bits_[from * n_ + to] = value ? 1 : 0; }
  std::size_t edge_count() const;
  std::vector<std::pair<std::size_t, std::size_t>> edges() const;

  friend bool operator==(const Incidence&, const Incidence&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::uint8_t> bits_;
};

struct LaneGraph {
  std::vector<Centerline> centerlines;
  Incidence incidence;
  BevExtent extent;

  std::size_t size() const { return centerlines.size(); }
  bool empty() const { return centerlines.empty(); }
  /// Number of control points per centerline, 0 for an empty graph.
  std::size_t degree() const { return centerlines.empty() ? 0 : centerlines.front().control_points.size(); }
};

/// Default endpoint coincidence tolerance in normalized units (about 1 m).
inline constexpr double kDefaultConnectionTolerance = 0.02;

/// Bernstein-form evaluation of the Bezier curve. Throws std::domain_error for t outside [0,1].
Point2 bezier_point(std::span<const Point2> control_points, double t);

/// n points at t = i/(n-1). Throws std::invalid_argument for n < 2.
std::vector<Point2> sample_polyline(const Centerline& centerline, std::size_t n_samples);

/// Edges implied by geometry: end(x) within tolerance of start(y), x != y.
Incidence derive_incidence(const LaneGraph& graph, double tolerance = kDefaultConnectionTolerance);

struct Violation {
  enum class Kind {
    incidence_size,
    self_loop,
    endpoint_gap,
    degree,
    coordinate_range,
    existence_range,
  };
  Kind kind;
  std::string message;
};

struct ValidateOptions {
  double tolerance = kDefaultConnectionTolerance;
  /// Ground-truth graphs must have every edge backed by coincident endpoints.
  bool ground_truth = true;
};

/// Empty iff every LaneGraph invariant holds.
std::vector<Violation> validate(const LaneGraph& graph, const ValidateOptions& options = {});

/// Keeps centerlines with existence >= threshold and the edges among them.
LaneGraph filter_existing(const LaneGraph& graph, double threshold);

}  // namespace lgwae
