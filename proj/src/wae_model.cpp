#include "lgwae/wae_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>

#include "lgwae/errors.hpp"

namespace lgwae {

using ad::Var;

ModelConfig ModelConfig::full_scale() {
  ModelConfig c;
  c.d_model = 512;
  c.n_heads = 8;
  c.n_queries = 100;
  c.n_helpers = 32;
  c.ffn_dim = 1024;
  c.assoc_dim = 64;
  c.conn_hidden = 64;
  return c;
}

void ModelConfig::check() const {
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
    throw ConfigError("model: d_model must be a positive multiple of n_heads");
  }
  if (n_helpers < 2) throw ConfigError("model: n_helpers must be >= 2");
  if (n_queries < 1) throw ConfigError("model: n_queries must be >= 1");
  if (control_points < 2) throw ConfigError("model: control_points must be >= 2");
  if (enc_layers < 1 || dec_layers < 1) throw ConfigError("model: need at least one encoder and decoder block");
  if (assoc_dim < 1 || ffn_dim < 1 || conn_hidden < 1) throw ConfigError("model: hidden sizes must be >= 1");
  if (beta < 0 || gamma < 0 || theta < 0 || w_exist < 0) throw ConfigError("model: loss weights must be >= 0");
  if (mmd_kernel_scale < 0) throw ConfigError("model: mmd_kernel_scale must be >= 0");
}

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"d_model", c.d_model},       {"n_heads", c.n_heads},
          {"enc_layers", c.enc_layers}, {"dec_layers", c.dec_layers},
          {"n_queries", c.n_queries},   {"n_helpers", c.n_helpers},
          {"control_points", c.control_points}, {"assoc_dim", c.assoc_dim},
          {"ffn_dim", c.ffn_dim},       {"conn_hidden", c.conn_hidden},
          {"mmd_kernel_scale", c.mmd_kernel_scale}, {"beta", c.beta},
          {"gamma", c.gamma},           {"theta", c.theta},
          {"w_exist", c.w_exist}};
}

ModelConfig config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw SchemaError("/", "model config must be an object");
  ModelConfig c;
  for (const auto& [key, v] : doc.items()) {
    const std::string ptr = "/" + key;
    auto count = [&, &v = v]() {
      if (!v.is_number_unsigned()) throw SchemaError(ptr, "expected a non-negative integer");
      return v.get<std::size_t>();
    };
    auto real = [&, &v = v]() {
      if (!v.is_number()) throw SchemaError(ptr, "expected a number");
      return v.get<double>();
    };
    if (key == "d_model") c.d_model = count();
    else if (key == "n_heads") c.n_heads = count();
    else if (key == "enc_layers") c.enc_layers = count();
    else if (key == "dec_layers") c.dec_layers = count();
    else if (key == "n_queries") c.n_queries = count();
    else if (key == "n_helpers") c.n_helpers = count();
    else if (key == "control_points") c.control_points = count();
    else if (key == "assoc_dim") c.assoc_dim = count();
    else if (key == "ffn_dim") c.ffn_dim = count();
    else if (key == "conn_hidden") c.conn_hidden = count();
    else if (key == "mmd_kernel_scale") c.mmd_kernel_scale = real();
    else if (key == "beta") c.beta = real();
    else if (key == "gamma") c.gamma = real();
    else if (key == "theta") c.theta = real();
    else if (key == "w_exist") c.w_exist = real();
    else throw SchemaError(ptr, "unknown field");
  }
  return c;
}

// ---------------------------------------------------------------------------
// Parameters

ModelParams::ModelParams(ModelConfig config) : config_(config) {}

void ModelParams::add(std::string name, Tensor value) {
  index_.emplace(name, tensors_.size());
  names_.push_back(std::move(name));
  tensors_.push_back(std::move(value));
}

std::size_t ModelParams::index_of(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("model has no parameter '" + name + "'");
  return it->second;
}

const Tensor& ModelParams::at(const std::string& name) const { return tensors_[index_of(name)]; }
Tensor& ModelParams::at(const std::string& name) { return tensors_[index_of(name)]; }

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor& t : tensors_) n += t.numel();
  return n;
}

std::uint64_t ModelParams::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    mix(names_[i].data(), names_[i].size());
    mix(tensors_[i].data().data(), tensors_[i].numel() * sizeof(double));
  }
  return h;
}

namespace {

void linear_layout(std::vector<std::pair<std::string, Shape>>& out, const std::string& name, std::size_t in,
                   std::size_t outdim, bool bias = true) {
  out.emplace_back(name + ".w", Shape{in, outdim});
  if (bias) out.emplace_back(name + ".b", Shape{1, outdim});
}

void norm_layout(std::vector<std::pair<std::string, Shape>>& out, const std::string& name, std::size_t d) {
  out.emplace_back(name + ".g", Shape{1, d});
  out.emplace_back(name + ".b", Shape{1, d});
}

void attention_layout(std::vector<std::pair<std::string, Shape>>& out, const std::string& name, std::size_t d) {
  for (const char* proj : {"q", "k", "v", "o"}) linear_layout(out, name + "." + proj, d, d);
}

}  // namespace

std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelConfig& c) {
  const std::size_t d = c.d_model;
  std::vector<std::pair<std::string, Shape>> out;
  linear_layout(out, "input.fc1", c.point_width(), d);
  linear_layout(out, "input.fc2", d, d);
  out.emplace_back("summarizer", Shape{1, d});
  for (std::size_t l = 0; l < c.enc_layers; ++l) {
    const std::string p = "enc." + std::to_string(l);
    norm_layout(out, p + ".ln1", d);
    attention_layout(out, p + ".attn", d);
    norm_layout(out, p + ".ln2", d);
    linear_layout(out, p + ".ffn.fc1", d, c.ffn_dim);
    linear_layout(out, p + ".ffn.fc2", c.ffn_dim, d);
  }
  out.emplace_back("helpers", Shape{c.n_helpers, d});
  out.emplace_back("queries", Shape{c.n_queries, d});
  for (std::size_t l = 0; l < c.dec_layers; ++l) {
    const std::string p = "dec." + std::to_string(l);
    norm_layout(out, p + ".ln1", d);
    attention_layout(out, p + ".self", d);
    norm_layout(out, p + ".ln2", d);
    attention_layout(out, p + ".cross", d);
    norm_layout(out, p + ".ln3", d);
    linear_layout(out, p + ".ffn.fc1", d, c.ffn_dim);
    linear_layout(out, p + ".ffn.fc2", c.ffn_dim, d);
  }
  norm_layout(out, "dec.ln_out", d);
  linear_layout(out, "head.exist", d, 1);
  linear_layout(out, "head.cp", d, c.point_width());
  linear_layout(out, "head.assoc", d, c.assoc_dim);
  linear_layout(out, "conn.from", c.assoc_dim, c.conn_hidden, false);
  linear_layout(out, "conn.to", c.assoc_dim, c.conn_hidden);
  linear_layout(out, "conn.out", c.conn_hidden, 1);
  return out;
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.check();
  ModelParams params(config);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> embed(0.0, 0.02);
  for (auto& [name, shape] : parameter_layout(config)) {
    Tensor t(shape);
    const auto ends_with = [&n = name](const char* suffix) {
      const std::size_t k = std::strlen(suffix);
      return n.size() >= k && n.compare(n.size() - k, k, suffix) == 0;
    };
    if (name == "summarizer" || name == "helpers" || name == "queries") {
      for (double& v : t.data()) v = embed(rng);
    } else if (ends_with(".g")) {
      t.fill(1.0);
    } else if (ends_with(".w")) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(shape[0]));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (double& v : t.data()) v = u(rng);
    }
    params.add(name, std::move(t));
  }
  return params;
}

double LatentCode::norm() const {
  double s = 0.0;
  for (double v : z) s += v * v;
  return std::sqrt(s);
}

BoundParams::BoundParams(ad::Graph& graph, const ModelParams& params, bool requires_grad)
    : graph_(&graph), params_(&params) {
  vars_.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) vars_.push_back(graph.bind(params.tensor(i), requires_grad));
}

BoundParams::BoundParams(ad::Graph& graph, const ModelParams& params, std::vector<ad::Var> vars)
    : graph_(&graph), params_(&params), vars_(std::move(vars)) {
  if (vars_.size() != params.size()) throw ShapeError("BoundParams: one var per parameter required");
}

// ---------------------------------------------------------------------------
// Forward passes

namespace {

Var linear(const BoundParams& p, const std::string& name, Var x) {
  return ad::add_row(ad::matmul(x, p[name + ".w"]), p[name + ".b"]);
}

Var norm(const BoundParams& p, const std::string& name, Var x) {
  return ad::layer_norm(x, p[name + ".g"], p[name + ".b"]);
}

ad::AttentionParams attention(const BoundParams& p, const std::string& name) {
  return {p[name + ".q.w"], p[name + ".q.b"], p[name + ".k.w"], p[name + ".k.b"],
          p[name + ".v.w"], p[name + ".v.b"], p[name + ".o.w"], p[name + ".o.b"]};
}

Var feed_forward(const BoundParams& p, const std::string& name, Var x) {
  return linear(p, name + ".fc2", ad::gelu(linear(p, name + ".fc1", x)));
}

}  // namespace

Var encode_vars(const BoundParams& p, Var rows) {
  const ModelConfig& c = p.config();
  if (rows.value().rows() == 0) throw DataError("encode: empty lane graph");
  if (rows.value().cols() != c.point_width()) {
    throw ShapeError("encode: expected " + std::to_string(c.point_width()) + " coordinates per centerline, got " +
                     shape_string(rows.shape()));
  }
  const Var features = linear(p, "input.fc2", ad::gelu(linear(p, "input.fc1", rows)));
  // The summarizer is the last token; attention is permutation-equivariant
  // over the rest, so its final state is permutation-invariant.
  Var x = ad::concat_rows({features, p["summarizer"]});
  for (std::size_t l = 0; l < c.enc_layers; ++l) {
    const std::string n = "enc." + std::to_string(l);
    const Var h = norm(p, n + ".ln1", x);
    x = ad::add(x, ad::multi_head_attention(h, h, h, attention(p, n + ".attn"), c.n_heads));
    x = ad::add(x, feed_forward(p, n + ".ffn", norm(p, n + ".ln2", x)));
  }
  const std::size_t last = x.value().rows() - 1;
  return ad::slice_rows(x, last, last + 1);
}

DecodedVars decode_vars(const BoundParams& p, Var z) {
  const ModelConfig& c = p.config();
  if (z.value().numel() != c.d_model) {
    throw ShapeError("decode: latent has shape " + shape_string(z.shape()) + ", expected d_model " +
                     std::to_string(c.d_model));
  }
  const Var z_row = z.value().rank() == 2 ? z : ad::reshape(z, Shape{1, c.d_model});
  const Var memory = ad::concat_rows({z_row, p["helpers"]});
  Var q = p["queries"];
  for (std::size_t l = 0; l < c.dec_layers; ++l) {
    const std::string n = "dec." + std::to_string(l);
    const Var h = norm(p, n + ".ln1", q);
    q = ad::add(q, ad::multi_head_attention(h, h, h, attention(p, n + ".self"), c.n_heads));
    q = ad::add(q, ad::multi_head_attention(norm(p, n + ".ln2", q), memory, memory, attention(p, n + ".cross"), c.n_heads));
    q = ad::add(q, feed_forward(p, n + ".ffn", norm(p, n + ".ln3", q)));
  }
  const Var out = norm(p, "dec.ln_out", q);
  return {linear(p, "head.exist", out), ad::sigmoid(linear(p, "head.cp", out)), linear(p, "head.assoc", out)};
}

Var connectivity_logits(const BoundParams& p, Var assoc_rows) {
  const std::size_t n = assoc_rows.value().rows();
  // MLP on [a_x ; a_y]: the first layer splits into a "from" and a "to" block.
  const Var from = ad::matmul(assoc_rows, p["conn.from.w"]);
  const Var to = linear(p, "conn.to", assoc_rows);
  const Var hidden = ad::gelu(ad::outer_sum_rows(from, to));
  const Var logits = linear(p, "conn.out", hidden);
  return ad::reshape(logits, Shape{n, n});
}

LatentCode encode(const LaneGraph& graph, const ModelParams& params) {
  if (graph.empty()) throw DataError("encode: empty lane graph");
  ad::Graph g;
  const BoundParams p(g, params, false);
  const Var z = encode_vars(p, g.leaf(control_point_rows(graph)));
  const auto data = z.value().data();
  return {std::vector<double>(data.begin(), data.end())};
}

DecodedGraph decode(const LatentCode& z, const ModelParams& params) {
  for (double v : z.z) {
    if (!std::isfinite(v)) throw std::invalid_argument("decode: non-finite latent code");
  }
  ad::Graph g;
  const BoundParams p(g, params, false);
  const DecodedVars d = decode_vars(p, g.leaf(z.as_row()));
  const Var conn = ad::sigmoid(connectivity_logits(p, d.assoc));
  DecodedGraph out;
  const Var exist = ad::sigmoid(d.existence_logits);
  out.existence.assign(exist.value().data().begin(), exist.value().data().end());
  out.control_points = d.control_points.value();
  out.assoc = d.assoc.value();
  out.connectivity = conn.value();
  return out;
}

LaneGraph to_lane_graph(const DecodedGraph& decoded, const BevExtent& extent, double existence_threshold,
                        double connectivity_threshold) {
  LaneGraph g;
  g.extent = extent;
  std::vector<std::size_t> kept;
  const std::size_t width = decoded.control_points.cols();
  for (std::size_t q = 0; q < decoded.existence.size(); ++q) {
    if (decoded.existence[q] < existence_threshold) continue;
    kept.push_back(q);
    Centerline c;
    for (std::size_t k = 0; k + 1 < width; k += 2) {
      c.control_points.push_back({decoded.control_points.at(q, k), decoded.control_points.at(q, k + 1)});
    }
    c.existence = decoded.existence[q];
    const auto assoc = decoded.assoc.row(q);
    c.assoc_feature.assign(assoc.begin(), assoc.end());
    g.centerlines.push_back(std::move(c));
  }
  g.incidence = Incidence(kept.size());
  for (std::size_t a = 0; a < kept.size(); ++a) {
    for (std::size_t b = 0; b < kept.size(); ++b) {
      if (a != b && decoded.connectivity.at(kept[a], kept[b]) >= connectivity_threshold) g.incidence.set(a, b);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Losses

Var mmd_loss(Var z, Var prior, double c) {
  const std::size_t n = z.value().rows();
  const std::size_t m = prior.value().rows();
  if (n < 2 || m < 2) throw std::invalid_argument("mmd_loss: need at least 2 samples on each side");
  auto kernel = [c](Var d) { return ad::scale(ad::reciprocal(ad::add_scalar(d, c)), c); };
  const double nn = static_cast<double>(n);
  const double mm = static_cast<double>(m);
  // Diagonal distances are exactly 0, so each diagonal kernel entry is exactly 1.
  const Var kzz = ad::add_scalar(ad::sum(kernel(ad::pairwise_sq_dist(z, z))), -nn);
  const Var kpp = ad::add_scalar(ad::sum(kernel(ad::pairwise_sq_dist(prior, prior))), -mm);
  const Var kzp = ad::sum(kernel(ad::pairwise_sq_dist(z, prior)));
  return ad::add(ad::add(ad::scale(kzz, 1.0 / (nn * (nn - 1))), ad::scale(kpp, 1.0 / (mm * (mm - 1)))),
                 ad::scale(kzp, -2.0 / (nn * mm)));
}

double mmd_loss(const Tensor& z_batch, const Tensor& prior_samples, double kernel_scale) {
  ad::Graph g;
  return mmd_loss(g.bind(z_batch), g.bind(prior_samples), kernel_scale).value().item();
}

SceneTarget SceneTarget::from_graph(const LaneGraph& graph) { return {control_point_rows(graph), graph.incidence}; }

Assignment match_decoded(const Tensor& existence_logits, const Tensor& control_points, const SceneTarget& target,
                         double w_exist) {
  const std::size_t q = control_points.rows();
  Assignment a;
  if (target.control_points.rows() == 0) {
    for (std::size_t i = 0; i < q; ++i) a.unmatched_pred.push_back(i);
    return a;
  }
  std::vector<double> existence(q);
  for (std::size_t i = 0; i < q; ++i) existence[i] = 1.0 / (1.0 + std::exp(-existence_logits[i]));
  return hungarian(centerline_cost_matrix(control_points, existence, target.control_points, w_exist));
}

Var existence_loss(const DecodedVars& decoded, const Assignment& assignment) {
  const std::size_t q = decoded.existence_logits.value().rows();
  Tensor exist_target(Shape{q, 1});
  for (auto [pred, _] : assignment.pairs) exist_target[pred] = 1.0;
  return ad::mean(ad::bce_with_logits(decoded.existence_logits, exist_target));
}

Var matched_l1(const DecodedVars& decoded, const SceneTarget& target, const Assignment& assignment) {
  ad::Graph& g = *decoded.control_points.graph;
  const std::size_t matched = assignment.pairs.size();
  if (matched == 0) return g.leaf(Tensor::scalar(0.0));
  const std::size_t width = target.control_points.cols();
  std::vector<std::size_t> pred_rows;
  Tensor label(Shape{matched, width});
  for (std::size_t i = 0; i < matched; ++i) {
    const auto [pr, lb] = assignment.pairs[i];
    pred_rows.push_back(pr);
    std::copy_n(target.control_points.row(lb).begin(), width, label.row(i).begin());
  }
  const Var diff = ad::sub(ad::gather_rows(decoded.control_points, pred_rows), g.leaf(std::move(label)));
  return ad::scale(ad::l1(diff), 1.0 / static_cast<double>(matched * width));
}

SceneLossVars scene_loss(const BoundParams& p, const DecodedVars& decoded, const SceneTarget& target,
                         const Assignment& assignment) {
  ad::Graph& g = p.graph();
  const ModelConfig& c = p.config();
  SceneLossVars out;
  out.existence_ce = existence_loss(decoded, assignment);
  out.l1 = matched_l1(decoded, target, assignment);

  const std::size_t matched = assignment.pairs.size();
  std::vector<std::size_t> pred_rows;
  std::vector<std::size_t> label_rows;
  for (auto [pr, lb] : assignment.pairs) {
    pred_rows.push_back(pr);
    label_rows.push_back(lb);
  }
  if (matched < 2) {
    out.connect_ce = g.leaf(Tensor::scalar(0.0));
  } else {
    const Var logits = connectivity_logits(p, ad::gather_rows(decoded.assoc, pred_rows));
    Tensor conn_target(Shape{matched, matched});
    Tensor mask(Shape{matched, matched});
    for (std::size_t a = 0; a < matched; ++a) {
      for (std::size_t b = 0; b < matched; ++b) {
        if (a == b) continue;
        mask.at(a, b) = 1.0;
        conn_target.at(a, b) = target.incidence(label_rows[a], label_rows[b]) ? 1.0 : 0.0;
      }
    }
    const Var ce = ad::mul(ad::bce_with_logits(logits, conn_target), g.leaf(std::move(mask)));
    out.connect_ce = ad::scale(ad::sum(ce), 1.0 / static_cast<double>(matched * (matched - 1)));
  }
  out.weighted = ad::add(ad::add(out.existence_ce, ad::scale(out.l1, c.beta)), ad::scale(out.connect_ce, c.gamma));
  return out;
}

LossComponents total_loss(const std::vector<DecodedGraph>& decoded, const std::vector<SceneTarget>& targets,
                          const std::vector<Assignment>& assignments, const Tensor& z_batch, const Tensor& prior,
                          const ModelConfig& config) {
  if (decoded.size() != targets.size() || decoded.size() != assignments.size() || decoded.empty()) {
    throw std::invalid_argument("total_loss: batch components differ in size");
  }
  auto bce = [](double p, double t) {
    const double eps = 1e-300;
    return -(t * std::log(std::max(p, eps)) + (1 - t) * std::log(std::max(1 - p, eps)));
  };
  LossComponents out;
  for (std::size_t s = 0; s < decoded.size(); ++s) {
    const DecodedGraph& d = decoded[s];
    const Assignment& a = assignments[s];
    const auto label_of = a.label_of_pred(d.existence.size());
    double ce = 0.0;
    for (std::size_t q = 0; q < d.existence.size(); ++q) ce += bce(d.existence[q], label_of[q] >= 0 ? 1.0 : 0.0);
    out.existence_ce += ce / static_cast<double>(d.existence.size());
    double l1 = 0.0;
    const std::size_t width = d.control_points.cols();
    for (auto [pr, lb] : a.pairs) {
      for (std::size_t k = 0; k < width; ++k) l1 += std::abs(d.control_points.at(pr, k) - targets[s].control_points.at(lb, k));
    }
    if (!a.pairs.empty()) out.l1 += l1 / static_cast<double>(a.pairs.size() * width);
    double cc = 0.0;
    const std::size_t m = a.pairs.size();
    for (auto [pa, la] : a.pairs) {
      for (auto [pb, lb] : a.pairs) {
        if (pa == pb) continue;
        cc += bce(d.connectivity.at(pa, pb), targets[s].incidence(la, lb) ? 1.0 : 0.0);
      }
    }
    if (m >= 2) out.connect_ce += cc / static_cast<double>(m * (m - 1));
  }
  const double n = static_cast<double>(decoded.size());
  out.existence_ce /= n;
  out.l1 /= n;
  out.connect_ce /= n;
  out.mmd = z_batch.rows() >= 2 ? mmd_loss(z_batch, prior, config.kernel_scale()) : 0.0;
  out.total = out.existence_ce + config.beta * out.l1 + config.gamma * out.connect_ce + config.theta * out.mmd;
  return out;
}

}  // namespace lgwae
