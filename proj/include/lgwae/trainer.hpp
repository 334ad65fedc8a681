#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>
#include "lgwae/errors.hpp"
#include "lgwae/lane_graph.hpp"
#include "lgwae/wae_model.hpp"

namespace lgwae {

/// Which file of each dataset pair the autoencoder reconstructs.
enum class TrainMode { est, gt };

std::string to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& name);

struct TrainConfig {
  TrainMode mode = TrainMode::est;
  std::size_t epochs = 50;
  /// When non-zero, training stops after this many optimizer steps instead.
  std::size_t steps = 0;
  std::size_t batch_size = 8;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  double prior_std = 1.0;
  /// Input centerlines below this existence score are dropped before encoding.
  double existence_threshold = 0.5;

  void check() const;
};

nlohmann::json train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& doc);

struct AdamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::size_t step = 0;
};

/// One bias-corrected Adam update of every tensor in params.
void adam_step(std::vector<Tensor*> params, const std::vector<Tensor>& grads, AdamState& state, const AdamHyper& hyper);
void adam_step(ModelParams& params, const std::vector<Tensor>& grads, AdamState& state, const AdamHyper& hyper);

struct Checkpoint {
  ModelParams params;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
};

inline constexpr std::uint32_t kCheckpointFormat = 1;

/// Binary layout: "LGWAE1\n", u32 format, u32-length JSON header, u32 tensor
/// count, then per tensor {u16 name length, name, u8 rank, u32 dims, f64 data}.
/// All integers and floats little-endian.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Throws FormatError on bad magic, unknown format, truncation or a tensor
/// whose name or shape disagrees with the embedded ModelConfig.
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::string checkpoint_bytes(const Checkpoint& ckpt);
Checkpoint checkpoint_from_bytes(const std::string& bytes);

/// Raised when a training step produces a non-finite loss.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& message, nlohmann::json diagnostic)
      : std::runtime_error(message), diagnostic_(std::move(diagnostic)) {}
  const nlohmann::json& diagnostic() const { return diagnostic_; }

 private:
  nlohmann::json diagnostic_;
};

struct StepLog {
  std::size_t step = 0;
  std::size_t epoch = 0;
  LossComponents loss;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<StepLog> steps;
  /// Mean components of the steps of each epoch.
  std::vector<LossComponents> epochs;
};

/// Reconstruction target for one training scene (filtered, non-empty).
struct TrainingScene {
  std::string name;
  LaneGraph graph;
};

/// Loads `*.est.json` (mode est) or `*.gt.json` (mode gt) files sorted by
/// name, filters by existence and drops empty scenes.
std::vector<TrainingScene> load_training_set(const std::filesystem::path& dir, TrainMode mode,
                                             double existence_threshold, std::size_t degree);

/// Gradients and loss of one batch. Scenes are processed in parallel and
/// the per-scene gradients summed in scene order.
struct BatchGradient {
  std::vector<Tensor> grads;
  LossComponents loss;
};
BatchGradient batch_gradient(const ModelParams& params, const std::vector<const LaneGraph*>& batch, const Tensor& prior);
BatchGradient batch_gradient_serial(const ModelParams& params, const std::vector<const LaneGraph*>& batch,
                                    const Tensor& prior);

using StepCallback = std::function<void(const StepLog&)>;

/// Autoencoder training; the input graph is its own reconstruction target.
TrainResult train(const std::vector<TrainingScene>& scenes, const TrainConfig& train_config,
                  const ModelConfig& model_config, const StepCallback& on_step = {});
TrainResult train(const std::filesystem::path& dataset_dir, const TrainConfig& train_config,
                  const ModelConfig& model_config, const StepCallback& on_step = {});

struct ReconstructionStats {
  double l1 = 0.0;                  // mean matched control-point L1
  double existence_accuracy = 0.0;  // fraction of queries classified correctly at 0.5
  double mean_latent_norm = 0.0;
};

/// decode(encode(g)) against g over a set of graphs.
ReconstructionStats reconstruction_stats(const ModelParams& params, const std::vector<const LaneGraph*>& graphs);

}  // namespace lgwae
