#include "lgwae/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "lgwae/errors.hpp"
#include "parallel.hpp"

namespace lgwae {

void MetricConfig::check() const {
  if (!(match_threshold > 0.0)) throw ConfigError("metrics: match_threshold must be positive");
  if (!(point_threshold > 0.0)) throw ConfigError("metrics: point_threshold must be positive");
  if (samples < 2) throw ConfigError("metrics: need at least 2 samples per centerline");
}

nlohmann::json metric_config_to_json(const MetricConfig& c) {
  return {{"match_threshold", c.match_threshold}, {"point_threshold", c.point_threshold}, {"samples", c.samples}};
}

MetricConfig metric_config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw SchemaError("/", "metric config must be an object");
  MetricConfig c;
  for (const auto& [key, v] : doc.items()) {
    const std::string ptr = "/" + key;
    if (key == "samples") {
      if (!v.is_number_unsigned()) throw SchemaError(ptr, "expected a non-negative integer");
      c.samples = v.get<std::size_t>();
    } else if (key == "match_threshold" || key == "point_threshold") {
      if (!v.is_number()) throw SchemaError(ptr, "expected a number");
      (key == "match_threshold" ? c.match_threshold : c.point_threshold) = v.get<double>();
    } else {
      throw SchemaError(ptr, "unknown field");
    }
  }
  return c;
}

namespace {

double sq_dist(Point2 a, Point2 b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return dx * dx + dy * dy;
}

double directed_mean(const std::vector<Point2>& from, const std::vector<Point2>& to) {
  double total = 0.0;
  for (Point2 p : from) {
    double best = std::numeric_limits<double>::infinity();
    for (Point2 q : to) best = std::min(best, sq_dist(p, q));
    total += std::sqrt(best);
  }
  return total / static_cast<double>(from.size());
}

std::vector<std::vector<Point2>> sample_all(const LaneGraph& g, std::size_t n) {
  std::vector<std::vector<Point2>> out;
  out.reserve(g.size());
  for (const Centerline& c : g.centerlines) out.push_back(sample_polyline(c, n));
  return out;
}

// Fraction of points in `from` with a point of `to` within radius.
double covered_fraction(const std::vector<std::vector<Point2>>& from, const std::vector<std::vector<Point2>>& to,
                        double radius) {
  const double r2 = radius * radius;
  std::size_t hit = 0;
  std::size_t total = 0;
  for (const auto& line : from) {
    for (Point2 p : line) {
      ++total;
      bool found = false;
      for (const auto& other : to) {
        for (Point2 q : other) {
          if (sq_dist(p, q) <= r2) {
            found = true;
            break;
          }
        }
        if (found) break;
      }
      hit += found ? 1 : 0;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(total);
}

double f_score(double precision, double recall) {
  return precision + recall > 0.0 ? 100.0 * 2.0 * precision * recall / (precision + recall) : 0.0;
}

}  // namespace

double chamfer_distance(const std::vector<Point2>& a, const std::vector<Point2>& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("chamfer_distance: empty point set");
  return 0.5 * (directed_mean(a, b) + directed_mean(b, a));
}

Assignment match_for_eval(const LaneGraph& pred, const LaneGraph& gt, const MetricConfig& config) {
  Assignment a;
  if (pred.empty() || gt.empty()) {
    for (std::size_t i = 0; i < pred.size(); ++i) a.unmatched_pred.push_back(i);
    for (std::size_t j = 0; j < gt.size(); ++j) a.unmatched_label.push_back(j);
    return a;
  }
  const auto ps = sample_all(pred, config.samples);
  const auto gs = sample_all(gt, config.samples);
  Tensor cost(Shape{pred.size(), gt.size()});
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (std::size_t j = 0; j < gt.size(); ++j) cost.at(i, j) = chamfer_distance(ps[i], gs[j]);
  }
  const Assignment full = hungarian(cost);
  std::vector<char> pred_used(pred.size(), 0), gt_used(gt.size(), 0);
  for (auto [i, j] : full.pairs) {
    if (cost.at(i, j) > config.match_threshold) continue;
    a.pairs.emplace_back(i, j);
    a.total_cost += cost.at(i, j);
    pred_used[i] = 1;
    gt_used[j] = 1;
  }
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!pred_used[i]) a.unmatched_pred.push_back(i);
  }
  for (std::size_t j = 0; j < gt.size(); ++j) {
    if (!gt_used[j]) a.unmatched_label.push_back(j);
  }
  return a;
}

double mean_f(const LaneGraph& pred, const LaneGraph& gt, const MetricConfig& config) {
  if (pred.empty() && gt.empty()) return 100.0;
  if (pred.empty() || gt.empty()) return 0.0;
  const auto ps = sample_all(pred, config.samples);
  const auto gs = sample_all(gt, config.samples);
  return f_score(covered_fraction(ps, gs, config.point_threshold), covered_fraction(gs, ps, config.point_threshold));
}

double detection_ratio(const Assignment& assignment, const LaneGraph& gt) {
  if (gt.empty()) return 100.0;
  return 100.0 * static_cast<double>(assignment.pairs.size()) / static_cast<double>(gt.size());
}

double connectivity_f(const LaneGraph& pred, const LaneGraph& gt, const Assignment& assignment) {
  const auto pred_edges = pred.incidence.edges();
  const std::size_t gt_edges = gt.incidence.edge_count();
  if (pred_edges.empty() && gt_edges == 0) return 100.0;
  const auto gt_of = assignment.label_of_pred(pred.size());
  std::size_t tp = 0;
  for (auto [x, y] : pred_edges) {
    if (gt_of[x] >= 0 && gt_of[y] >= 0 &&
        gt.incidence(static_cast<std::size_t>(gt_of[x]), static_cast<std::size_t>(gt_of[y]))) {
      ++tp;
    }
  }
  const double precision = pred_edges.empty() ? 0.0 : static_cast<double>(tp) / static_cast<double>(pred_edges.size());
  const double recall = gt_edges == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(gt_edges);
  return f_score(precision, recall);
}

SceneMetrics evaluate_scene(const LaneGraph& pred, const LaneGraph& gt, const MetricConfig& config) {
  const Assignment a = match_for_eval(pred, gt, config);
  SceneMetrics m;
  m.m_f = mean_f(pred, gt, config);
  m.detect = detection_ratio(a, gt);
  m.c_f = connectivity_f(pred, gt, a);
  return m;
}

namespace {

MetricReport evaluate_impl(const std::vector<EvalPair>& pairs, const MetricConfig& config, bool parallel) {
  config.check();
  MetricReport r;
  r.scenes.resize(pairs.size());
  detail::parallel_for(pairs.size(), parallel, [&](std::size_t i) {
    r.scenes[i] = evaluate_scene(pairs[i].pred, pairs[i].gt, config);
    r.scenes[i].name = pairs[i].name;
  });
  for (const SceneMetrics& s : r.scenes) {
    r.m_f += s.m_f;
    r.detect += s.detect;
    r.c_f += s.c_f;
  }
  if (!r.scenes.empty()) {
    const double k = static_cast<double>(r.scenes.size());
    r.m_f /= k;
    r.detect /= k;
    r.c_f /= k;
  }
  return r;
}

}  // namespace

MetricReport evaluate(const std::vector<EvalPair>& pairs, const MetricConfig& config) {
  return evaluate_impl(pairs, config, true);
}

MetricReport evaluate_serial(const std::vector<EvalPair>& pairs, const MetricConfig& config) {
  return evaluate_impl(pairs, config, false);
}

nlohmann::json metric_report_to_json(const MetricReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const SceneMetrics& s : r.scenes) {
    rows.push_back({{"name", s.name}, {"m_f", s.m_f}, {"detect", s.detect}, {"c_f", s.c_f}});
  }
  return {{"m_f", r.m_f}, {"detect", r.detect}, {"c_f", r.c_f}, {"scene_count", r.scenes.size()}, {"scenes", rows}};
}

std::string metric_report_csv(const MetricReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << "name,m_f,detect,c_f\n";
  for (const SceneMetrics& s : r.scenes) out << s.name << ',' << s.m_f << ',' << s.detect << ',' << s.c_f << '\n';
  return out.str();
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("spearman: sequences differ in length");
  if (a.size() < 2) return 0.0;
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

UncertaintyAnalysis uncertainty_analysis(const std::vector<double>& uncertainty, const std::vector<SceneMetrics>& rows,
                                         std::size_t n_bins) {
  if (uncertainty.size() != rows.size()) throw std::invalid_argument("uncertainty_analysis: row counts differ");
  if (uncertainty.empty()) throw DataError("uncertainty_analysis: no scenes");
  if (n_bins == 0) throw ConfigError("uncertainty_analysis: need at least one bin");
  UncertaintyAnalysis out;
  out.uncertainty = uncertainty;
  out.rows = rows;
  std::vector<double> mf, det, cf;
  for (const SceneMetrics& r : rows) {
    mf.push_back(r.m_f);
    det.push_back(r.detect);
    cf.push_back(r.c_f);
  }
  out.rho_m_f = spearman(uncertainty, mf);
  out.rho_detect = spearman(uncertainty, det);
  out.rho_c_f = spearman(uncertainty, cf);

  const auto [lo_it, hi_it] = std::minmax_element(uncertainty.begin(), uncertainty.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  const double width = hi > lo ? (hi - lo) / static_cast<double>(n_bins) : 1.0;
  out.bins.resize(n_bins);
  for (std::size_t b = 0; b < n_bins; ++b) {
    out.bins[b].lo = lo + width * static_cast<double>(b);
    out.bins[b].hi = lo + width * static_cast<double>(b + 1);
  }
  for (std::size_t i = 0; i < uncertainty.size(); ++i) {
    std::size_t b = hi > lo ? static_cast<std::size_t>((uncertainty[i] - lo) / width) : 0;
    b = std::min(b, n_bins - 1);
    HistogramBin& bin = out.bins[b];
    ++bin.count;
    bin.mean_m_f += mf[i];
    bin.mean_detect += det[i];
    bin.mean_c_f += cf[i];
  }
  for (HistogramBin& bin : out.bins) {
    if (bin.count == 0) continue;
    const double k = static_cast<double>(bin.count);
    bin.mean_m_f /= k;
    bin.mean_detect /= k;
    bin.mean_c_f /= k;
  }
  return out;
}

nlohmann::json uncertainty_analysis_to_json(const UncertaintyAnalysis& a) {
  nlohmann::json bins = nlohmann::json::array();
  for (const HistogramBin& b : a.bins) {
    bins.push_back({{"lo", b.lo},
                    {"hi", b.hi},
                    {"count", b.count},
                    {"mean_m_f", b.mean_m_f},
                    {"mean_detect", b.mean_detect},
                    {"mean_c_f", b.mean_c_f}});
  }
  return {{"spearman", {{"m_f", a.rho_m_f}, {"detect", a.rho_detect}, {"c_f", a.rho_c_f}}},
          {"bins", bins},
          {"uncertainty", a.uncertainty}};
}

}  // namespace lgwae
