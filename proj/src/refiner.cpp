#include "lgwae/refiner.hpp"

#include <algorithm>
#include <cmath>

#include "lgwae/errors.hpp"
#include "lgwae/graph_io.hpp"
#include "parallel.hpp"

namespace lgwae {

void RefineConfig::check() const {
  if (!(alpha >= 0.0)) throw ConfigError("refine: alpha must be >= 0");
  if (!(lambda >= 0.0)) throw ConfigError("refine: lambda must be >= 0");
  if (iterations < 1) throw ConfigError("refine: iterations must be >= 1");
  if (!(step_size > 0.0)) throw ConfigError("refine: step_size must be positive");
  for (double t : {existence_threshold, connectivity_threshold}) {
    if (!(t > 0.0 && t < 1.0)) throw ConfigError("refine: thresholds must lie in (0,1)");
  }
}

nlohmann::json refine_config_to_json(const RefineConfig& c) {
  return {{"alpha", c.alpha},
          {"lambda", c.lambda},
          {"iterations", c.iterations},
          {"step_size", c.step_size},
          {"existence_threshold", c.existence_threshold},
          {"connectivity_threshold", c.connectivity_threshold},
          {"snapshot_every", c.snapshot_every},
          {"max_halvings", c.max_halvings}};
}

RefineConfig refine_config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw SchemaError("/", "refine config must be an object");
  RefineConfig c;
  for (const auto& [key, v] : doc.items()) {
    const std::string ptr = "/" + key;
    const bool count_field = key == "iterations" || key == "snapshot_every" || key == "max_halvings";
    if (count_field && !v.is_number_unsigned()) throw SchemaError(ptr, "expected a non-negative integer");
    if (!count_field && !v.is_number()) throw SchemaError(ptr, "expected a number");
    if (key == "alpha") c.alpha = v.get<double>();
    else if (key == "lambda") c.lambda = v.get<double>();
    else if (key == "iterations") c.iterations = v.get<std::size_t>();
    else if (key == "step_size") c.step_size = v.get<double>();
    else if (key == "existence_threshold") c.existence_threshold = v.get<double>();
    else if (key == "connectivity_threshold") c.connectivity_threshold = v.get<double>();
    else if (key == "snapshot_every") c.snapshot_every = v.get<std::size_t>();
    else if (key == "max_halvings") c.max_halvings = v.get<std::size_t>();
    else throw SchemaError(ptr, "unknown field");
  }
  return c;
}

namespace {

SceneTarget prepare_target(const LaneGraph& target, const ModelParams& params, const RefineConfig& config) {
  const LaneGraph kept = filter_existing(target, config.existence_threshold);
  if (kept.empty()) throw DataError("refine: no centerline of the target reaches the existence threshold");
  if (kept.degree() != params.config().control_points) {
    throw DataError("refine: target centerlines have " + std::to_string(kept.degree()) + " control points, model expects " +
                    std::to_string(params.config().control_points));
  }
  return SceneTarget::from_graph(kept);
}

ObjectiveValue evaluate(const std::vector<double>& z, const SceneTarget& target, const ModelParams& params,
                        const RefineConfig& config, bool with_grad) {
  ad::Graph g;
  const BoundParams p(g, params, false);
  const ad::Var zv = g.leaf(Tensor(Shape{1, z.size()}, z), with_grad);
  const DecodedVars decoded = decode_vars(p, zv);
  const Assignment a = match_decoded(decoded.existence_logits.value(), decoded.control_points.value(), target,
                                     params.config().w_exist);
  const ad::Var ce = existence_loss(decoded, a);
  const ad::Var l1 = matched_l1(decoded, target, a);
  const ad::Var norm = ad::l2_norm(zv);
  const ad::Var total = ad::add(ad::add(ce, ad::scale(l1, config.lambda)), ad::scale(norm, config.alpha));
  ObjectiveValue out;
  out.value = total.value().item();
  out.existence_ce = ce.value().item();
  out.l1 = l1.value().item();
  out.norm = norm.value().item();
  if (with_grad) {
    g.backward(total);
    const Tensor grad = g.grad(zv);
    out.grad.assign(grad.data().begin(), grad.data().end());
  }
  return out;
}

bool finite(const ObjectiveValue& v) {
  return std::isfinite(v.value) && std::all_of(v.grad.begin(), v.grad.end(), [](double x) { return std::isfinite(x); });
}

LaneGraph decode_graph(const std::vector<double>& z, const ModelParams& params, const BevExtent& extent,
                       const RefineConfig& config) {
  return to_lane_graph(decode(LatentCode{z}, params), extent, config.existence_threshold, config.connectivity_threshold);
}

}  // namespace

ObjectiveValue objective(const LatentCode& z, const LaneGraph& target, const ModelParams& params,
                         const RefineConfig& config, bool with_grad) {
  if (z.z.size() != params.config().d_model) throw ShapeError("objective: latent width differs from d_model");
  return evaluate(z.z, prepare_target(target, params, config), params, config, with_grad);
}

double uncertainty(const LatentCode& best_z, const LaneGraph& target, const ModelParams& params,
                   const RefineConfig& config) {
  return objective(best_z, target, params, config, false).l1;
}

RefinementReport refine(const LaneGraph& initial, const ModelParams& params, const RefineConfig& config) {
  config.check();
  RefinementReport r;
  r.initial_graph = initial;
  const LaneGraph kept = filter_existing(initial, config.existence_threshold);
  if (kept.empty()) {
    r.empty_target = true;
    r.unoptimized = initial;
    r.refined = initial;
    return r;
  }
  const SceneTarget target = prepare_target(initial, params, config);
  const BevExtent& extent = initial.extent;

  std::vector<double> z = encode(kept, params).z;
  ObjectiveValue current = evaluate(z, target, params, config, true);
  r.initial = current;
  r.z0_norm = current.norm;
  r.unoptimized = decode_graph(z, params, extent, config);
  r.trace.push_back(current.value);
  r.best = current;
  r.z_star = z;
  if (config.snapshot_every > 0) r.snapshots.push_back({0, r.unoptimized});

  std::vector<double> candidate(z.size());
  for (std::size_t k = 1; k <= config.iterations; ++k) {
    double step = config.step_size;
    bool accepted = false;
    ObjectiveValue next;
    for (std::size_t h = 0; h <= config.max_halvings; ++h) {
      for (std::size_t i = 0; i < z.size(); ++i) candidate[i] = z[i] - step * current.grad[i];
      next = evaluate(candidate, target, params, config, true);
      if (finite(next)) {
        accepted = true;
        break;
      }
      step *= 0.5;
      ++r.halvings;
    }
    if (!accepted) {
      r.diverged = true;
      break;
    }
    z = candidate;
    current = std::move(next);
    r.trace.push_back(current.value);
    if (current.value < r.best.value) {
      r.best = current;
      r.best_iteration = k;
      r.z_star = z;
    }
    if (config.snapshot_every > 0 && (k % config.snapshot_every == 0 || k == config.iterations)) {
      r.snapshots.push_back({k, decode_graph(r.z_star, params, extent, config)});
    }
  }
  r.best.grad.clear();
  r.initial.grad.clear();
  r.z_star_norm = r.best.norm;
  r.uncertainty = r.best.l1;
  r.refined = decode_graph(r.z_star, params, extent, config);
  return r;
}

namespace {

std::vector<RefinementReport> refine_batch_impl(const std::vector<RefineInput>& inputs, const ModelParams& params,
                                                const RefineConfig& config, bool parallel) {
  config.check();
  std::vector<RefinementReport> out(inputs.size());
  detail::parallel_for(inputs.size(), parallel, [&](std::size_t i) {
    out[i] = refine(inputs[i].graph, params, config);
    out[i].name = inputs[i].name;
  });
  return out;
}

nlohmann::json objective_to_json(const ObjectiveValue& v) {
  return {{"value", v.value}, {"existence_ce", v.existence_ce}, {"l1", v.l1}, {"norm", v.norm}};
}

ObjectiveValue objective_from_json(const nlohmann::json& doc) {
  ObjectiveValue v;
  v.value = doc.at("value").get<double>();
  v.existence_ce = doc.at("existence_ce").get<double>();
  v.l1 = doc.at("l1").get<double>();
  v.norm = doc.at("norm").get<double>();
  return v;
}

}  // namespace

std::vector<RefinementReport> refine_batch(const std::vector<RefineInput>& inputs, const ModelParams& params,
                                           const RefineConfig& config) {
  return refine_batch_impl(inputs, params, config, true);
}

std::vector<RefinementReport> refine_batch_serial(const std::vector<RefineInput>& inputs, const ModelParams& params,
                                                  const RefineConfig& config) {
  return refine_batch_impl(inputs, params, config, false);
}

nlohmann::json report_to_json(const RefinementReport& r) {
  nlohmann::json snaps = nlohmann::json::array();
  for (const Snapshot& s : r.snapshots) snaps.push_back({{"iteration", s.iteration}, {"graph", graph_to_json(s.graph)}});
  return {{"version", 1},
          {"name", r.name},
          {"trace", r.trace},
          {"best_iteration", r.best_iteration},
          {"initial", objective_to_json(r.initial)},
          {"best", objective_to_json(r.best)},
          {"uncertainty", r.uncertainty},
          {"z0_norm", r.z0_norm},
          {"z_star_norm", r.z_star_norm},
          {"z_star", r.z_star},
          {"halvings", r.halvings},
          {"flags", {{"empty_target", r.empty_target}, {"diverged", r.diverged}}},
          {"initial_graph", graph_to_json(r.initial_graph)},
          {"unoptimized", graph_to_json(r.unoptimized)},
          {"refined", graph_to_json(r.refined)},
          {"snapshots", std::move(snaps)}};
}

RefinementReport report_from_json(const nlohmann::json& doc, std::optional<std::size_t> degree) {
  RefinementReport r;
  try {
    if (doc.at("version").get<int>() != 1) throw SchemaError("/version", "unsupported report version");
    r.name = doc.at("name").get<std::string>();
    r.trace = doc.at("trace").get<std::vector<double>>();
    r.best_iteration = doc.at("best_iteration").get<std::size_t>();
    r.initial = objective_from_json(doc.at("initial"));
    r.best = objective_from_json(doc.at("best"));
    r.uncertainty = doc.at("uncertainty").get<double>();
    r.z0_norm = doc.at("z0_norm").get<double>();
    r.z_star_norm = doc.at("z_star_norm").get<double>();
    r.z_star = doc.at("z_star").get<std::vector<double>>();
    r.halvings = doc.at("halvings").get<std::size_t>();
    r.empty_target = doc.at("flags").at("empty_target").get<bool>();
    r.diverged = doc.at("flags").at("diverged").get<bool>();
    r.initial_graph = graph_from_json(doc.at("initial_graph"), degree);
    r.unoptimized = graph_from_json(doc.at("unoptimized"), degree);
    r.refined = graph_from_json(doc.at("refined"), degree);
    for (const auto& s : doc.at("snapshots")) {
      r.snapshots.push_back({s.at("iteration").get<std::size_t>(), graph_from_json(s.at("graph"), degree)});
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("/", std::string("refinement report: ") + e.what());
  }
  return r;
}

}  // namespace lgwae
