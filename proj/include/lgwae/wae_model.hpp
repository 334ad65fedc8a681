#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>
#include "lgwae/attention.hpp"
#include "lgwae/autodiff.hpp"
#include "lgwae/lane_graph.hpp"
#include "lgwae/matcher.hpp"
#include "lgwae/tensor.hpp"

namespace lgwae {

/// Architecture and loss weights of the lane-graph autoencoder.
/// Defaults are the desk-scale configuration; full_scale() gives the
/// full-size one (hidden 512, 100 queries, 32 helpers).
struct ModelConfig {
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t enc_layers = 2;
  std::size_t dec_layers = 2;
  std::size_t n_queries = 24;
  std::size_t n_helpers = 4;
  std::size_t control_points = 3;
  std::size_t assoc_dim = 16;
  std::size_t ffn_dim = 128;
  std::size_t conn_hidden = 32;
  /// Inverse multiquadric kernel scale; 0 selects 2 * d_model.
  double mmd_kernel_scale = 0.0;
  double beta = 2.0;
  double gamma = 1.0;
  double theta = 1.0;
  /// Existence bonus in the matching cost.
  double w_exist = 0.5;

  static ModelConfig full_scale();
  double kernel_scale() const { return mmd_kernel_scale > 0.0 ? mmd_kernel_scale : 2.0 * static_cast<double>(d_model); }
  std::size_t point_width() const { return 2 * control_points; }
  /// Throws ConfigError on violated invariants.
  void check() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

nlohmann::json config_to_json(const ModelConfig& config);
/// Missing keys keep defaults; unknown keys throw SchemaError.
ModelConfig config_from_json(const nlohmann::json& doc);

/// Named learnable tensors, in a fixed creation order.
class ModelParams {
 public:
  ModelParams() = default;
  explicit ModelParams(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  std::size_t size() const { return tensors_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const Tensor& tensor(std::size_t i) const { return tensors_[i]; }
  Tensor& tensor(std::size_t i) { return tensors_[i]; }
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  std::size_t index_of(const std::string& name) const;
  std::size_t parameter_count() const;
  /// FNV-1a over names and raw bytes; used to assert immutability.
  std::uint64_t checksum() const;

  void add(std::string name, Tensor value);

 private:
  ModelConfig config_;
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Shapes of every parameter, in creation order.
std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelConfig& config);

/// Fan-in scaled uniform weights, zero biases, unit layer-norm gains and
/// N(0, 0.02^2) summarizer, helper and query embeddings.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

struct LatentCode {
  std::vector<double> z;

  Tensor as_row() const { return Tensor(Shape{1, z.size()}, z); }
  double norm() const;
};

struct DecodedGraph {
  std::vector<double> existence;  // per query
  Tensor control_points;          // n_queries x 2B, in [0,1]
  Tensor assoc;                   // n_queries x assoc_dim
  Tensor connectivity;            // n_queries x n_queries, p(x -> y)
};

/// Parameters recorded on a graph, aligned with ModelParams indices.
class BoundParams {
 public:
  BoundParams(ad::Graph& graph, const ModelParams& params, bool requires_grad);
  /// Uses vars already recorded on graph, one per parameter in index order.
  BoundParams(ad::Graph& graph, const ModelParams& params, std::vector<ad::Var> vars);
  ad::Var operator[](const std::string& name) const { return vars_[params_->index_of(name)]; }
  ad::Var at(std::size_t i) const { return vars_[i]; }
  const ModelConfig& config() const { return params_->config(); }
  ad::Graph& graph() const { return *graph_; }

 private:
  ad::Graph* graph_;
  const ModelParams* params_;
  std::vector<ad::Var> vars_;
};

struct DecodedVars {
  ad::Var existence_logits;  // Q x 1
  ad::Var control_points;    // Q x 2B
  ad::Var assoc;             // Q x A
};

/// Encoder: centerline rows (N x 2B) plus the summarizer token, no positional
/// encodings; returns the summarizer state after the last block (1 x d).
ad::Var encode_vars(const BoundParams& p, ad::Var centerline_rows);
/// Decoder: learnt queries attend to [z; helpers]; reads nothing but z.
DecodedVars decode_vars(const BoundParams& p, ad::Var z);
/// Pairwise connectivity logits (n x n) of the given association rows.
ad::Var connectivity_logits(const BoundParams& p, ad::Var assoc_rows);

/// Throws DataError for an empty graph.
LatentCode encode(const LaneGraph& graph, const ModelParams& params);
DecodedGraph decode(const LatentCode& z, const ModelParams& params);

/// Thresholds existence and connectivity; control points are in normalized units.
LaneGraph to_lane_graph(const DecodedGraph& decoded, const BevExtent& extent, double existence_threshold = 0.5,
                        double connectivity_threshold = 0.5);

/// Unbiased MMD^2 with k(a,b) = C / (C + |a-b|^2). Rows of z_batch and prior are samples.
ad::Var mmd_loss(ad::Var z_batch, ad::Var prior_samples, double kernel_scale);
double mmd_loss(const Tensor& z_batch, const Tensor& prior_samples, double kernel_scale);

/// Reconstruction target of one scene.
struct SceneTarget {
  Tensor control_points;  // N x 2B
  Incidence incidence;

  static SceneTarget from_graph(const LaneGraph& graph);
};

struct SceneLossVars {
  ad::Var existence_ce;
  ad::Var l1;
  ad::Var connect_ce;
  ad::Var weighted;  // existence_ce + beta * l1 + gamma * connect_ce
};

/// Mean existence CE over all queries; matched queries have target 1.
ad::Var existence_loss(const DecodedVars& decoded, const Assignment& assignment);
/// Mean absolute error over the control points of matched pairs (0 when none).
ad::Var matched_l1(const DecodedVars& decoded, const SceneTarget& target, const Assignment& assignment);

/// Existence CE over all queries (matched -> 1), mean L1 over matched control
/// points, connectivity CE over ordered pairs of distinct matched queries.
SceneLossVars scene_loss(const BoundParams& p, const DecodedVars& decoded, const SceneTarget& target,
                         const Assignment& assignment);

/// Hungarian matching of decoded queries against a target (values only).
Assignment match_decoded(const Tensor& existence_logits, const Tensor& control_points, const SceneTarget& target,
                         double w_exist);

struct LossComponents {
  double existence_ce = 0.0;
  double l1 = 0.0;
  double connect_ce = 0.0;
  double mmd = 0.0;
  double total = 0.0;
};

/// Non-differentiable evaluation of the full training loss for one batch:
/// mean over scenes of (CE_e + beta L1 + gamma CE_c) + theta * MMD(z, prior).
LossComponents total_loss(const std::vector<DecodedGraph>& decoded, const std::vector<SceneTarget>& targets,
                          const std::vector<Assignment>& assignments, const Tensor& z_batch, const Tensor& prior,
                          const ModelConfig& config);

}  // namespace lgwae
