#include "lgwae/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>

#include "lgwae/graph_io.hpp"
#include "lgwae/scene_synth.hpp"
#include "parallel.hpp"

namespace lgwae {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

std::string to_string(TrainMode mode) { return mode == TrainMode::est ? "est" : "gt"; }

TrainMode train_mode_from_string(const std::string& name) {
  if (name == "est") return TrainMode::est;
  if (name == "gt") return TrainMode::gt;
  throw ConfigError("unknown training mode '" + name + "' (expected est or gt)");
}

void TrainConfig::check() const {
  if (batch_size < 2) throw ConfigError("train: batch_size must be >= 2");
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be positive");
  if (epochs == 0 && steps == 0) throw ConfigError("train: need epochs or steps");
  if (!(prior_std > 0.0)) throw ConfigError("train: prior_std must be positive");
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"mode", to_string(c.mode)},
          {"epochs", c.epochs},
          {"steps", c.steps},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps},
          {"seed", c.seed},
          {"prior_std", c.prior_std},
          {"existence_threshold", c.existence_threshold}};
}

TrainConfig train_config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw SchemaError("/", "train config must be an object");
  TrainConfig c;
  for (const auto& [key, v] : doc.items()) {
    const std::string ptr = "/" + key;
    auto count = [&, &v = v]() {
      if (!v.is_number_unsigned()) throw SchemaError(ptr, "expected a non-negative integer");
      return v.get<std::uint64_t>();
    };
    auto real = [&, &v = v]() {
      if (!v.is_number()) throw SchemaError(ptr, "expected a number");
      return v.get<double>();
    };
    if (key == "mode") {
      if (!v.is_string()) throw SchemaError(ptr, "expected a string");
      try {
        c.mode = train_mode_from_string(v.get<std::string>());
      } catch (const ConfigError& e) {
        throw SchemaError(ptr, e.what());
      }
    } else if (key == "epochs") c.epochs = count();
    else if (key == "steps") c.steps = count();
    else if (key == "batch_size") c.batch_size = count();
    else if (key == "learning_rate") c.learning_rate = real();
    else if (key == "adam_beta1") c.adam_beta1 = real();
    else if (key == "adam_beta2") c.adam_beta2 = real();
    else if (key == "adam_eps") c.adam_eps = real();
    else if (key == "seed") c.seed = count();
    else if (key == "prior_std") c.prior_std = real();
    else if (key == "existence_threshold") c.existence_threshold = real();
    else throw SchemaError(ptr, "unknown field");
  }
  return c;
}

// ---------------------------------------------------------------------------
// Adam

void adam_step(std::vector<Tensor*> params, const std::vector<Tensor>& grads, AdamState& state, const AdamHyper& h) {
  if (params.size() != grads.size()) throw ShapeError("adam_step: parameter and gradient counts differ");
  if (state.m.empty()) {
    for (const Tensor* p : params) {
      state.m.push_back(Tensor::zeros_like(*p));
      state.v.push_back(Tensor::zeros_like(*p));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(h.beta1, t);
  const double c2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = grads[i];
    if (g.shape() != p.shape()) {
      throw ShapeError("adam_step: gradient " + shape_string(g.shape()) + " vs parameter " + shape_string(p.shape()));
    }
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::size_t k = 0; k < p.numel(); ++k) {
      m[k] = h.beta1 * m[k] + (1.0 - h.beta1) * g[k];
      v[k] = h.beta2 * v[k] + (1.0 - h.beta2) * g[k] * g[k];
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      p[k] -= h.learning_rate * mhat / (std::sqrt(vhat) + h.eps);
    }
  }
}

void adam_step(ModelParams& params, const std::vector<Tensor>& grads, AdamState& state, const AdamHyper& hyper) {
  std::vector<Tensor*> ptrs;
  for (std::size_t i = 0; i < params.size(); ++i) ptrs.push_back(&params.tensor(i));
  adam_step(std::move(ptrs), grads, state, hyper);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[] = "LGWAE1\n";
constexpr std::size_t kMagicLen = sizeof(kMagic) - 1;

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::string take(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) throw FormatError(std::string("checkpoint truncated while reading ") + what);
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string checkpoint_bytes(const Checkpoint& ckpt) {
  std::string out(kMagic, kMagicLen);
  put<std::uint32_t>(out, kCheckpointFormat);
  const std::string header =
      nlohmann::json{{"model", config_to_json(ckpt.params.config())}, {"seed", ckpt.seed}, {"step", ckpt.step}}.dump();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.params.size()));
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    const std::string& name = ckpt.params.name(i);
    const Tensor& t = ckpt.params.tensor(i);
    put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    out.append(reinterpret_cast<const char*>(t.data().data()), t.numel() * sizeof(double));
  }
  return out;
}

Checkpoint checkpoint_from_bytes(const std::string& bytes) {
  Reader in(bytes);
  if (bytes.size() < kMagicLen || bytes.compare(0, kMagicLen, kMagic) != 0) throw FormatError("checkpoint: bad magic");
  in.take(kMagicLen, "magic");
  const auto format = in.get<std::uint32_t>("format");
  if (format != kCheckpointFormat) {
    throw FormatError("checkpoint: format version " + std::to_string(format) + " is not supported (expected " +
                      std::to_string(kCheckpointFormat) + ")");
  }
  const auto header_len = in.get<std::uint32_t>("header length");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(in.take(header_len, "header"));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("checkpoint: bad header: ") + e.what());
  }
  if (!header.is_object() || !header.contains("model")) throw FormatError("checkpoint: header lacks model config");
  ModelConfig config;
  try {
    config = config_from_json(header["model"]);
    config.check();
  } catch (const std::exception& e) {
    throw FormatError(std::string("checkpoint: bad model config: ") + e.what());
  }
  Checkpoint ckpt;
  ckpt.seed = header.value("seed", std::uint64_t{0});
  ckpt.step = header.value("step", std::uint64_t{0});
  ckpt.params = ModelParams(config);

  const auto layout = parameter_layout(config);
  const auto count = in.get<std::uint32_t>("tensor count");
  if (count != layout.size()) {
    throw FormatError("checkpoint: " + std::to_string(count) + " tensors, config expects " + std::to_string(layout.size()));
  }
  for (std::size_t i = 0; i < count; ++i) {
    const auto name_len = in.get<std::uint16_t>("tensor name length");
    std::string name = in.take(name_len, "tensor name");
    if (name != layout[i].first) {
      throw FormatError("checkpoint: tensor " + std::to_string(i) + " is '" + name + "', expected '" + layout[i].first + "'");
    }
    const auto rank = in.get<std::uint8_t>("tensor rank");
    Shape shape;
    for (std::size_t d = 0; d < rank; ++d) shape.push_back(in.get<std::uint32_t>("tensor dims"));
    if (shape != layout[i].second) {
      throw FormatError("checkpoint: tensor '" + name + "' has shape " + shape_string(shape) + ", config expects " +
                        shape_string(layout[i].second));
    }
    Tensor t(shape);
    const std::string raw = in.take(t.numel() * sizeof(double), "tensor data");
    std::memcpy(t.data().data(), raw.data(), raw.size());
    ckpt.params.add(std::move(name), std::move(t));
  }
  if (!in.done()) throw FormatError("checkpoint: trailing bytes");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  const std::string bytes = checkpoint_bytes(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_bytes(ss.str());
}

// ---------------------------------------------------------------------------
// Training

std::vector<TrainingScene> load_training_set(const std::filesystem::path& dir, TrainMode mode,
                                             double existence_threshold, std::size_t degree) {
  if (!std::filesystem::is_directory(dir)) throw DataError("dataset directory " + dir.string() + " does not exist");
  const std::string suffix = mode == TrainMode::est ? ".est.json" : ".gt.json";
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<TrainingScene> out;
  for (const auto& f : files) {
    LaneGraph g = filter_existing(load_graph(f, degree), existence_threshold);
    if (g.empty()) continue;
    out.push_back({f.filename().string(), std::move(g)});
  }
  return out;
}

namespace {

struct ScenePass {
  std::unique_ptr<ad::Graph> graph;
  std::unique_ptr<BoundParams> bound;
  ad::Var z;
};

void encode_pass(const ModelParams& params, const LaneGraph& scene, ScenePass& pass) {
  pass.graph = std::make_unique<ad::Graph>();
  pass.bound = std::make_unique<BoundParams>(*pass.graph, params, true);
  pass.z = encode_vars(*pass.bound, pass.graph->leaf(control_point_rows(scene)));
}

struct SceneResult {
  std::vector<Tensor> grads;
  double existence_ce = 0.0;
  double l1 = 0.0;
  double connect_ce = 0.0;
};

SceneResult decode_pass(const LaneGraph& scene, ScenePass& pass, const Tensor& dz, double theta, double batch,
                        std::size_t n_params) {
  const BoundParams& p = *pass.bound;
  ad::Graph& g = *pass.graph;
  const DecodedVars decoded = decode_vars(p, pass.z);
  const SceneTarget target = SceneTarget::from_graph(scene);
  const Assignment a =
      match_decoded(decoded.existence_logits.value(), decoded.control_points.value(), target, p.config().w_exist);
  const SceneLossVars loss = scene_loss(p, decoded, target, a);
  // theta * <z, dMMD/dz> carries the batch-level MMD gradient into this scene's encoder.
  const ad::Var mmd_link = ad::scale(ad::sum(ad::mul(pass.z, g.leaf(dz))), theta);
  const ad::Var objective = ad::add(ad::scale(loss.weighted, 1.0 / batch), mmd_link);
  g.backward(objective);
  SceneResult r;
  r.grads.reserve(n_params);
  for (std::size_t i = 0; i < n_params; ++i) r.grads.push_back(g.grad(p.at(i)));
  r.existence_ce = loss.existence_ce.value().item();
  r.l1 = loss.l1.value().item();
  r.connect_ce = loss.connect_ce.value().item();
  return r;
}

BatchGradient batch_gradient_impl(const ModelParams& params, const std::vector<const LaneGraph*>& batch,
                                  const Tensor& prior, bool parallel) {
  const ModelConfig& c = params.config();
  const std::size_t n = batch.size();
  if (n < 2) throw ConfigError("batch_gradient: need at least 2 scenes for the MMD term");
  std::vector<ScenePass> passes(n);
  detail::parallel_for(n, parallel, [&](std::size_t s) { encode_pass(params, *batch[s], passes[s]); });

  Tensor z_batch(Shape{n, c.d_model});
  for (std::size_t s = 0; s < n; ++s) {
    std::copy_n(passes[s].z.value().data().begin(), c.d_model, z_batch.row(s).begin());
  }
  ad::Graph mg;
  const ad::Var zb = mg.leaf(z_batch, true);
  const ad::Var mmd = mmd_loss(zb, mg.bind(prior), c.kernel_scale());
  mg.backward(mmd);
  const Tensor dz = mg.grad(zb);

  std::vector<SceneResult> results(n);
  detail::parallel_for(n, parallel, [&](std::size_t s) {
    Tensor row(Shape{1, c.d_model});
    std::copy_n(dz.row(s).begin(), c.d_model, row.data().begin());
    results[s] = decode_pass(*batch[s], passes[s], row, c.theta, static_cast<double>(n), params.size());
    passes[s] = ScenePass{};
  });

  BatchGradient out;
  out.grads.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) out.grads.push_back(Tensor::zeros_like(params.tensor(i)));
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor& acc = out.grads[i];
      const Tensor& g = results[s].grads[i];
      for (std::size_t k = 0; k < acc.numel(); ++k) acc[k] += g[k];
    }
    out.loss.existence_ce += results[s].existence_ce;
    out.loss.l1 += results[s].l1;
    out.loss.connect_ce += results[s].connect_ce;
  }
  const double b = static_cast<double>(n);
  out.loss.existence_ce /= b;
  out.loss.l1 /= b;
  out.loss.connect_ce /= b;
  out.loss.mmd = mmd.value().item();
  out.loss.total = out.loss.existence_ce + c.beta * out.loss.l1 + c.gamma * out.loss.connect_ce + c.theta * out.loss.mmd;
  return out;
}

}  // namespace

BatchGradient batch_gradient(const ModelParams& params, const std::vector<const LaneGraph*>& batch, const Tensor& prior) {
  return batch_gradient_impl(params, batch, prior, true);
}

BatchGradient batch_gradient_serial(const ModelParams& params, const std::vector<const LaneGraph*>& batch,
                                    const Tensor& prior) {
  return batch_gradient_impl(params, batch, prior, false);
}

TrainResult train(const std::vector<TrainingScene>& scenes, const TrainConfig& tc, const ModelConfig& mc,
                  const StepCallback& on_step) {
  tc.check();
  mc.check();
  if (scenes.size() < tc.batch_size) {
    throw DataError("training set has " + std::to_string(scenes.size()) + " non-empty scenes, batch_size is " +
                    std::to_string(tc.batch_size));
  }
  for (const TrainingScene& s : scenes) {
    if (s.graph.degree() != mc.control_points) {
      throw DataError(s.name + ": centerlines have " + std::to_string(s.graph.degree()) + " control points, model expects " +
                      std::to_string(mc.control_points));
    }
  }
  std::mt19937_64 rng(tc.seed);
  TrainResult result;
  result.checkpoint.params = init_params(mc, stream_seed(tc.seed, 0, 3));
  result.checkpoint.seed = tc.seed;
  ModelParams& params = result.checkpoint.params;
  AdamState adam;
  const AdamHyper hyper{tc.learning_rate, tc.adam_beta1, tc.adam_beta2, tc.adam_eps};
  std::normal_distribution<double> prior_dist(0.0, tc.prior_std);

  std::vector<std::size_t> order(scenes.size());
  const std::size_t per_epoch = scenes.size() / tc.batch_size;
  const std::size_t total_steps = tc.steps > 0 ? tc.steps : tc.epochs * per_epoch;
  std::size_t step = 0;
  for (std::size_t epoch = 0; step < total_steps; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    LossComponents epoch_sum;
    std::size_t epoch_steps = 0;
    for (std::size_t b = 0; b < per_epoch && step < total_steps; ++b) {
      std::vector<const LaneGraph*> batch;
      std::vector<std::string> names;
      for (std::size_t k = 0; k < tc.batch_size; ++k) {
        const TrainingScene& s = scenes[order[b * tc.batch_size + k]];
        batch.push_back(&s.graph);
        names.push_back(s.name);
      }
      Tensor prior(Shape{tc.batch_size, mc.d_model});
      for (double& v : prior.data()) v = prior_dist(rng);
      BatchGradient bg;
      std::string failure;
      try {
        bg = batch_gradient(params, batch, prior);
      } catch (const std::invalid_argument& e) {
        // Non-finite activations surface as invalid matching or decoding input.
        failure = e.what();
        bg.loss.total = std::nan("");
      }
      if (!std::isfinite(bg.loss.total)) {
        nlohmann::json diag{{"step", step},
                            {"error", failure},
                            {"epoch", epoch},
                            {"scenes", names},
                            {"existence_ce", bg.loss.existence_ce},
                            {"l1", bg.loss.l1},
                            {"connect_ce", bg.loss.connect_ce},
                            {"mmd", bg.loss.mmd}};
        throw TrainingError("non-finite training loss at step " + std::to_string(step), diag);
      }
      adam_step(params, bg.grads, adam, hyper);
      result.steps.push_back({step, epoch, bg.loss});
      if (on_step) on_step(result.steps.back());
      epoch_sum.existence_ce += bg.loss.existence_ce;
      epoch_sum.l1 += bg.loss.l1;
      epoch_sum.connect_ce += bg.loss.connect_ce;
      epoch_sum.mmd += bg.loss.mmd;
      epoch_sum.total += bg.loss.total;
      ++epoch_steps;
      ++step;
    }
    if (epoch_steps > 0) {
      const double k = static_cast<double>(epoch_steps);
      result.epochs.push_back({epoch_sum.existence_ce / k, epoch_sum.l1 / k, epoch_sum.connect_ce / k,
                               epoch_sum.mmd / k, epoch_sum.total / k});
    }
  }
  result.checkpoint.step = step;
  return result;
}

TrainResult train(const std::filesystem::path& dataset_dir, const TrainConfig& tc, const ModelConfig& mc,
                  const StepCallback& on_step) {
  return train(load_training_set(dataset_dir, tc.mode, tc.existence_threshold, mc.control_points), tc, mc, on_step);
}

ReconstructionStats reconstruction_stats(const ModelParams& params, const std::vector<const LaneGraph*>& graphs) {
  ReconstructionStats stats;
  if (graphs.empty()) return stats;
  const std::size_t n = graphs.size();
  std::vector<ReconstructionStats> rows(n);
  detail::parallel_for(n, true, [&](std::size_t i) {
    const LaneGraph& g = *graphs[i];
    const LatentCode z = encode(g, params);
    const DecodedGraph d = decode(z, params);
    const SceneTarget target = SceneTarget::from_graph(g);
    Tensor logits(Shape{d.existence.size(), 1});
    for (std::size_t q = 0; q < d.existence.size(); ++q) {
      const double p = std::clamp(d.existence[q], 1e-300, 1.0 - 1e-16);
      logits[q] = std::log(p / (1.0 - p));
    }
    const Assignment a = match_decoded(logits, d.control_points, target, params.config().w_exist);
    const auto label_of = a.label_of_pred(d.existence.size());
    double l1 = 0.0;
    const std::size_t width = d.control_points.cols();
    for (auto [pr, lb] : a.pairs) {
      for (std::size_t k = 0; k < width; ++k) l1 += std::abs(d.control_points.at(pr, k) - target.control_points.at(lb, k));
    }
    std::size_t correct = 0;
    for (std::size_t q = 0; q < d.existence.size(); ++q) {
      correct += (d.existence[q] >= 0.5) == (label_of[q] >= 0) ? 1 : 0;
    }
    rows[i] = {a.pairs.empty() ? 0.0 : l1 / static_cast<double>(a.pairs.size() * width),
               static_cast<double>(correct) / static_cast<double>(d.existence.size()), z.norm()};
  });
  for (const auto& r : rows) {
    stats.l1 += r.l1;
    stats.existence_accuracy += r.existence_accuracy;
    stats.mean_latent_norm += r.mean_latent_norm;
  }
  stats.l1 /= static_cast<double>(n);
  stats.existence_accuracy /= static_cast<double>(n);
  stats.mean_latent_norm /= static_cast<double>(n);
  return stats;
}

}  // namespace lgwae
