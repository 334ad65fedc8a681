#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>
#include "lgwae/lane_graph.hpp"
#include "lgwae/matcher.hpp"

namespace lgwae {

struct MetricConfig {
  /// Pairs with a larger symmetric Chamfer distance are left unmatched.
  double match_threshold = 0.05;
  /// A sampled point counts when another graph's sample lies within this distance.
  double point_threshold = 0.01;
  std::size_t samples = 100;

  void check() const;
};

nlohmann::json metric_config_to_json(const MetricConfig& config);
MetricConfig metric_config_from_json(const nlohmann::json& doc);

/// Mean of the two directed mean nearest-neighbour distances.
double chamfer_distance(const std::vector<Point2>& a, const std::vector<Point2>& b);

/// Hungarian on Chamfer distances between sampled centerlines, discarding
/// pairs above the match threshold.
Assignment match_for_eval(const LaneGraph& pred, const LaneGraph& gt, const MetricConfig& config = {});

/// Point-level F-score in percent over all sampled points of both graphs.
double mean_f(const LaneGraph& pred, const LaneGraph& gt, const MetricConfig& config = {});
/// Matched GT centerlines over all GT centerlines, percent. Empty GT gives 100.
double detection_ratio(const Assignment& assignment, const LaneGraph& gt);
/// Edge F-score in percent after mapping predicted edges through the assignment.
double connectivity_f(const LaneGraph& pred, const LaneGraph& gt, const Assignment& assignment);

struct SceneMetrics {
  std::string name;
  double m_f = 0.0;
  double detect = 0.0;
  double c_f = 0.0;
};

struct MetricReport {
  double m_f = 0.0;
  double detect = 0.0;
  double c_f = 0.0;
  std::vector<SceneMetrics> scenes;
};

SceneMetrics evaluate_scene(const LaneGraph& pred, const LaneGraph& gt, const MetricConfig& config = {});

struct EvalPair {
  std::string name;
  LaneGraph pred;
  LaneGraph gt;
};

/// Per-scene metrics (scenes in parallel) and their means.
MetricReport evaluate(const std::vector<EvalPair>& pairs, const MetricConfig& config = {});
MetricReport evaluate_serial(const std::vector<EvalPair>& pairs, const MetricConfig& config = {});

nlohmann::json metric_report_to_json(const MetricReport& report);
std::string metric_report_csv(const MetricReport& report);

/// Spearman rank correlation with average ranks for ties. Zero when either
/// side is constant.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  double mean_m_f = 0.0;
  double mean_detect = 0.0;
  double mean_c_f = 0.0;
};

struct UncertaintyAnalysis {
  std::vector<HistogramBin> bins;
  double rho_m_f = 0.0;
  double rho_detect = 0.0;
  double rho_c_f = 0.0;
  std::vector<double> uncertainty;
  std::vector<SceneMetrics> rows;
};

/// Equal-width bins over the uncertainty range; empty bins keep zero means.
UncertaintyAnalysis uncertainty_analysis(const std::vector<double>& uncertainty, const std::vector<SceneMetrics>& rows,
                                         std::size_t n_bins = 8);

nlohmann::json uncertainty_analysis_to_json(const UncertaintyAnalysis& analysis);

}  // namespace lgwae
