#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "lgwae/lane_graph.hpp"
#include "lgwae/metrics.hpp"
#include "lgwae/refiner.hpp"

namespace lgwae {

struct RenderStyle {
  double canvas = 600.0;
  double margin = 20.0;
  std::size_t samples = 100;
  std::string stroke = "#1f5fbf";
  std::string overlay_stroke = "#9a9a9a";
  double stroke_width = 2.0;
  double arrow_size = 7.0;
};

/// Top-down view: lateral x to the right, forward up. The overlay (usually
/// ground truth) is drawn dashed underneath. One polyline per centerline.
std::string render_svg(const LaneGraph& graph, const LaneGraph* overlay = nullptr, const RenderStyle& style = {});

struct Curve {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

/// Mean objective over scenes against iteration. Traces of different length
/// are averaged over the scenes that reached each iteration.
Curve mean_objective_curve(const std::vector<RefinementReport>& reports);

/// Mean M-F, Detect and C-F of the snapshot graphs against ground truth, per
/// snapshot iteration. gts[i] belongs to reports[i].
std::vector<Curve> metric_curves(const std::vector<RefinementReport>& reports, const std::vector<LaneGraph>& gts,
                                 const MetricConfig& config = {});

/// Line chart with one panel for the objective and, when given, a second
/// panel for the metric curves. Throws DataError without reports.
std::string plot_convergence(const std::vector<RefinementReport>& reports, const std::vector<Curve>& metrics = {});

/// Scatter of reconstruction error against M-F with per-bin means.
std::string plot_uncertainty(const UncertaintyAnalysis& analysis);

}  // namespace lgwae
