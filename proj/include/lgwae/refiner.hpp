#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>
#include "lgwae/lane_graph.hpp"
#include "lgwae/wae_model.hpp"

namespace lgwae {

struct RefineConfig {
  double alpha = 0.02;
  /// L1 weight inside the matching loss.
  double lambda = 1.0;
  std::size_t iterations = 600;
  double step_size = 0.1;
  double existence_threshold = 0.5;
  double connectivity_threshold = 0.5;
  /// Decoded snapshots are kept every this many iterations (0 disables).
  std::size_t snapshot_every = 50;
  /// Step halvings tried when a step produces a non-finite objective.
  std::size_t max_halvings = 8;

  void check() const;
};

nlohmann::json refine_config_to_json(const RefineConfig& config);
RefineConfig refine_config_from_json(const nlohmann::json& doc);

struct ObjectiveValue {
  double value = 0.0;
  double existence_ce = 0.0;
  double l1 = 0.0;
  double norm = 0.0;  // ||z||_2, before the alpha weight
  std::vector<double> grad;  // d value / dz; empty unless requested
};

/// L_CE(existence, all queries) + lambda * L1(matched control points) + alpha * ||z||.
/// `target` is filtered at the existence threshold first; throws DataError if
/// nothing survives.
ObjectiveValue objective(const LatentCode& z, const LaneGraph& target, const ModelParams& params,
                         const RefineConfig& config, bool with_grad = true);

/// Mean matched control-point L1 between decode(z) and the filtered target.
double uncertainty(const LatentCode& best_z, const LaneGraph& target, const ModelParams& params,
                   const RefineConfig& config = {});

struct Snapshot {
  std::size_t iteration = 0;
  /// decode of the best-so-far z at this iteration, thresholded.
  LaneGraph graph;
};

struct RefinementReport {
  std::string name;
  std::vector<double> trace;  // objective of iterate k, k = 0..iterations
  std::size_t best_iteration = 0;
  ObjectiveValue initial;
  ObjectiveValue best;
  double uncertainty = 0.0;
  double z0_norm = 0.0;
  double z_star_norm = 0.0;
  std::vector<double> z_star;
  LaneGraph initial_graph;
  /// decode(Z0) thresholded: the result without latent optimization.
  LaneGraph unoptimized;
  LaneGraph refined;
  std::vector<Snapshot> snapshots;
  std::size_t halvings = 0;
  /// Nothing survived the existence filter; refined is a copy of the input.
  bool empty_target = false;
  /// A step stayed non-finite after every halving; best-so-far was returned.
  bool diverged = false;
};

RefinementReport refine(const LaneGraph& initial, const ModelParams& params, const RefineConfig& config);

struct RefineInput {
  std::string name;
  LaneGraph graph;
};

/// Scenes are refined concurrently; results are in input order.
std::vector<RefinementReport> refine_batch(const std::vector<RefineInput>& inputs, const ModelParams& params,
                                           const RefineConfig& config);
std::vector<RefinementReport> refine_batch_serial(const std::vector<RefineInput>& inputs, const ModelParams& params,
                                                  const RefineConfig& config);

nlohmann::json report_to_json(const RefinementReport& report);
RefinementReport report_from_json(const nlohmann::json& doc, std::optional<std::size_t> degree = std::nullopt);

}  // namespace lgwae
