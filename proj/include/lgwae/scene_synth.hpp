#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>
#include "lgwae/lane_graph.hpp"

namespace lgwae {

enum class TemplateKind { straight, curve, t_junction, x_intersection, merge, split };

std::string to_string(TemplateKind kind);
TemplateKind template_kind_from_string(const std::string& name);

/// Parametric road layout. Lanes of straight/curve/merge/split templates run
/// away from the ego vehicle; for junctions, lanes_per_direction counts the
/// lanes of the crossing road in each direction.
struct SceneTemplate {
  TemplateKind kind = TemplateKind::straight;
  int lanes_per_direction = 1;
  /// Signed curvature (1/m) of curve templates.
  double curvature = 0.0;
  /// Std (m) of Gaussian jitter on curve nodes and interior control points.
  double jitter = 0.0;
  /// Lateral offset (m) of the ego road centre.
  double lateral_offset = 0.0;
  /// Heading change (rad) of straight roads over the window.
  double heading = 0.0;
  /// Forward distance (m) at which junctions, splits and merges occur.
  double junction_z = 25.0;
  /// Turn radius (m) of junction connectors; divergence (m) of split/merge branches.
  double branch_size = 7.0;
  /// Bezier control points per centerline.
  std::size_t degree = 3;

  void check() const;
};

/// Random template drawn from the built-in scene distribution.
SceneTemplate sample_template(std::mt19937_64& rng, std::size_t degree = 3);

/// Ground-truth graph for a template; existence 1, edges built from shared nodes.
LaneGraph generate_scene(const SceneTemplate& tmpl, const BevExtent& extent, std::uint64_t seed);

struct ExistenceNoise {
  /// Beta(alpha, beta) scores; alpha = beta = 0 means a point mass at 1.
  double alpha = 6.0;
  double beta = 1.5;
};

struct NoiseProfile {
  double cp_sigma = 0.015;
  double p_drop = 0.1;
  double p_dup = 0.1;
  double p_edge_flip = 0.05;
  ExistenceNoise existence;

  static NoiseProfile identity() { return {0.0, 0.0, 0.0, 0.0, {0.0, 0.0}}; }
  void check() const;
};

nlohmann::json profile_to_json(const NoiseProfile& profile);
/// Missing keys keep their defaults; unknown keys are a SchemaError.
NoiseProfile profile_from_json(const nlohmann::json& doc);

struct PerturbedEstimate {
  LaneGraph graph;
  /// Ground-truth id each estimated centerline was derived from.
  std::vector<std::size_t> provenance;
  /// Every centerline was dropped; the scene should be skipped.
  bool skipped = false;
};

/// Simulated estimator output: control-point noise, drops, noisy duplicates,
/// flipped incidence entries and Beta-distributed existence scores.
PerturbedEstimate perturb_estimate(const LaneGraph& gt, const NoiseProfile& profile, std::uint64_t seed);

/// Independent per-scene RNG stream derived from (global seed, scene index, purpose).
std::uint64_t stream_seed(std::uint64_t global_seed, std::uint64_t index, std::uint64_t purpose = 0);

struct SceneSample {
  std::size_t index = 0;
  SceneTemplate tmpl;
  LaneGraph gt;
  PerturbedEstimate estimate;
};

struct SynthOptions {
  std::size_t count = 0;
  std::uint64_t seed = 0;
  NoiseProfile profile;
  BevExtent extent;
  std::size_t degree = 3;
};

/// Generates scenes in parallel over indices; identical to the serial reference.
std::vector<SceneSample> synthesize(const SynthOptions& options);
std::vector<SceneSample> synthesize_serial(const SynthOptions& options);

std::string scene_stem(std::size_t index);

struct DatasetWriteResult {
  std::size_t written = 0;
  std::vector<std::size_t> skipped;
};

/// Writes scene_%05d.gt.json / scene_%05d.est.json pairs; skipped scenes are omitted.
DatasetWriteResult write_dataset(const std::vector<SceneSample>& samples, const std::filesystem::path& dir);

}  // namespace lgwae
