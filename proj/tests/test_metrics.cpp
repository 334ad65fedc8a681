#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lgwae/errors.hpp"
#include "lgwae/metrics.hpp"
#include "support.hpp"

using namespace lgwae;

namespace {

Centerline vertical(double x, double y0 = 0.2, double y1 = 0.8) {
  Centerline c;
  c.control_points = {{x, y0}, {x, 0.5 * (y0 + y1)}, {x, y1}};
  return c;
}

// Four parallel lanes 0.2 apart; far beyond every threshold from each other.
LaneGraph parallel_lanes() {
  LaneGraph g;
  for (double x : {0.1, 0.3, 0.5, 0.7}) g.centerlines.push_back(vertical(x));
  g.incidence = Incidence(4);
  return g;
}

// Chain of four consecutive segments along x = 0.5.
LaneGraph chain4() {
  LaneGraph g;
  for (int i = 0; i < 4; ++i) g.centerlines.push_back(vertical(0.5, 0.1 + 0.2 * i, 0.3 + 0.2 * i));
  g.incidence = Incidence(4);
  for (std::size_t i = 0; i + 1 < 4; ++i) g.incidence.set(i, i + 1);
  return g;
}

LaneGraph permuted(const LaneGraph& g, const std::vector<std::size_t>& perm) {
  LaneGraph out = g;
  out.incidence = Incidence(g.size());
  std::vector<std::size_t> inverse(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    out.centerlines[i] = g.centerlines[perm[i]];
    inverse[perm[i]] = i;
  }
  for (auto [a, b] : g.incidence.edges()) out.incidence.set(inverse[a], inverse[b]);
  return out;
}

LaneGraph translated(LaneGraph g, double dx, double dy) {
  for (auto& c : g.centerlines) {
    for (auto& p : c.control_points) {
      p.x += dx;
      p.y += dy;
    }
  }
  return g;
}

void expect_all(const SceneMetrics& m, double m_f, double detect, double c_f) {
  EXPECT_NEAR(m.m_f, m_f, 1e-9);
  EXPECT_NEAR(m.detect, detect, 1e-9);
  EXPECT_NEAR(m.c_f, c_f, 1e-9);
}

}  // namespace

TEST(Chamfer, HandValues) {
  const std::vector<Point2> a{{0, 0}};
  const std::vector<Point2> b{{0, 0}, {1, 0}};
  EXPECT_DOUBLE_EQ(chamfer_distance(a, b), 0.25);
  EXPECT_DOUBLE_EQ(chamfer_distance(b, a), 0.25);
  EXPECT_EQ(chamfer_distance(b, b), 0.0);
}

TEST(MatchForEval, MatchesBruteForceWithDiscard) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> noise(0.0, 0.01);
  const MetricConfig cfg;
  for (int trial = 0; trial < 100; ++trial) {
    const LaneGraph gt = fixtures::random_graph(rng, 1 + trial % 4);
    LaneGraph pred = gt;
    for (auto& c : pred.centerlines) {
      for (auto& p : c.control_points) {
        p.x += noise(rng);
        p.y += noise(rng);
      }
    }
    const LaneGraph extra = fixtures::random_graph(rng, trial % 3);
    for (const auto& c : extra.centerlines) pred.centerlines.push_back(c);
    pred.incidence = Incidence(pred.size());
    const std::size_t n = pred.size(), m = gt.size();
    std::vector<std::vector<double>> cost(n, std::vector<double>(m));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        cost[i][j] = chamfer_distance(sample_polyline(pred.centerlines[i], 100), sample_polyline(gt.centerlines[j], 100));
      }
    }
    // Injections of gt (the smaller side) into pred.
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = 1e300;
    std::vector<std::pair<std::size_t, std::size_t>> best_pairs;
    do {
      double total = 0.0;
      for (std::size_t j = 0; j < m; ++j) total += cost[perm[j]][j];
      if (total < best - 1e-12) {
        best = total;
        best_pairs.clear();
        for (std::size_t j = 0; j < m; ++j) {
          if (cost[perm[j]][j] <= cfg.match_threshold) best_pairs.push_back({perm[j], j});
        }
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
    std::sort(best_pairs.begin(), best_pairs.end());
    EXPECT_EQ(match_for_eval(pred, gt, cfg).pairs, best_pairs);
  }
}

TEST(MatchForEval, EmptyPredictionMatchesNothing) {
  const Assignment a = match_for_eval(LaneGraph{}, parallel_lanes());
  EXPECT_TRUE(a.pairs.empty());
  EXPECT_EQ(a.unmatched_label.size(), 4u);
}

TEST(Metrics, IdenticalGraphsScoreFullMarks) {
  expect_all(evaluate_scene(chain4(), chain4()), 100, 100, 100);
  expect_all(evaluate_scene(parallel_lanes(), parallel_lanes()), 100, 100, 100);
}

TEST(Metrics, EmptyCases) {
  expect_all(evaluate_scene(LaneGraph{}, LaneGraph{}), 100, 100, 100);
  const SceneMetrics m = evaluate_scene(LaneGraph{}, chain4());
  EXPECT_EQ(m.m_f, 0.0);
  EXPECT_EQ(m.detect, 0.0);
  EXPECT_EQ(m.c_f, 0.0);
  EXPECT_EQ(mean_f(chain4(), LaneGraph{}), 0.0);
}

TEST(Metrics, FarTranslationScoresZero) {
  const SceneMetrics m = evaluate_scene(translated(parallel_lanes(), 0.1, 0.0), parallel_lanes());
  EXPECT_EQ(m.m_f, 0.0);
}

TEST(MeanF, HalfTheLanesGivesTwoThirds) {
  LaneGraph pred = parallel_lanes();
  pred.centerlines.resize(2);
  pred.incidence = Incidence(2);
  EXPECT_NEAR(mean_f(pred, parallel_lanes()), 200.0 / 3.0, 1e-9);
}

TEST(Detection, ThreeOfFour) {
  Assignment a;
  a.pairs = {{0, 0}, {1, 2}, {2, 3}};
  EXPECT_DOUBLE_EQ(detection_ratio(a, parallel_lanes()), 75.0);
  EXPECT_DOUBLE_EQ(detection_ratio(Assignment{}, parallel_lanes()), 0.0);
  EXPECT_DOUBLE_EQ(detection_ratio(Assignment{}, LaneGraph{}), 100.0);
}

TEST(ConnectivityF, TwoOfThreeWithOneSpurious) {
  const LaneGraph gt = chain4();
  LaneGraph pred = gt;
  pred.incidence = Incidence(4);
  pred.incidence.set(0, 1);
  pred.incidence.set(1, 2);
  pred.incidence.set(3, 0);
  const Assignment a = match_for_eval(pred, gt);
  ASSERT_EQ(a.pairs.size(), 4u);
  EXPECT_NEAR(connectivity_f(pred, gt, a), 200.0 / 3.0, 1e-9);

  pred.incidence = Incidence(4);
  EXPECT_EQ(connectivity_f(pred, gt, a), 0.0);
  EXPECT_EQ(connectivity_f(parallel_lanes(), parallel_lanes(), match_for_eval(parallel_lanes(), parallel_lanes())), 100.0);
}

TEST(ConnectivityF, EdgesToUnmatchedCountAsFalsePositives) {
  const LaneGraph gt = chain4();
  LaneGraph pred = gt;
  pred.centerlines[3] = vertical(0.05);  // no longer matches gt 3
  const Assignment a = match_for_eval(pred, gt);
  ASSERT_EQ(a.pairs.size(), 3u);
  // TP 2 of 3 predicted; FN 1 of 3 GT.
  EXPECT_NEAR(connectivity_f(pred, gt, a), 200.0 / 3.0, 1e-9);
}

TEST(Metrics, PermutationTranslationAndSwapInvariance) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> noise(0.0, 0.004);
  const LaneGraph gt = translated(chain4(), -0.1, 0.0);
  LaneGraph pred = gt;
  for (auto& c : pred.centerlines) {
    for (auto& p : c.control_points) p.x += noise(rng);
  }
  pred.incidence.set(2, 0);
  pred.centerlines.push_back(vertical(0.85));
  pred.incidence = [&] {
    Incidence inc(5);
    for (auto [a, b] : pred.incidence.edges()) inc.set(a, b);
    inc.set(4, 1);
    return inc;
  }();
  const SceneMetrics base = evaluate_scene(pred, gt);
  EXPECT_GT(base.c_f, 0.0);
  EXPECT_LT(base.c_f, 100.0);

  const SceneMetrics perm = evaluate_scene(permuted(pred, {3, 0, 4, 2, 1}), permuted(gt, {2, 3, 1, 0}));
  expect_all(perm, base.m_f, base.detect, base.c_f);

  const SceneMetrics moved = evaluate_scene(translated(pred, 0.07, -0.03), translated(gt, 0.07, -0.03));
  EXPECT_NEAR(moved.m_f, base.m_f, 1e-9);
  EXPECT_NEAR(moved.detect, base.detect, 1e-9);
  EXPECT_NEAR(moved.c_f, base.c_f, 1e-9);

  const SceneMetrics swapped = evaluate_scene(gt, pred);
  EXPECT_NEAR(swapped.m_f, base.m_f, 1e-9);
  EXPECT_NEAR(swapped.c_f, base.c_f, 1e-9);
}

TEST(Evaluate, ParallelMatchesSerialAndAverages) {
  std::mt19937_64 rng(3);
  std::vector<EvalPair> pairs;
  for (int i = 0; i < 12; ++i) {
    const LaneGraph gt = fixtures::random_graph(rng, 1 + i % 4);
    pairs.push_back({"s" + std::to_string(i), i % 2 ? gt : fixtures::random_graph(rng, 2), gt});
  }
  const MetricReport a = evaluate(pairs);
  const MetricReport b = evaluate_serial(pairs);
  ASSERT_EQ(a.scenes.size(), 12u);
  double m_f = 0.0;
  for (std::size_t i = 0; i < 12; ++i) {
    EXPECT_EQ(a.scenes[i].name, pairs[i].name);
    EXPECT_EQ(a.scenes[i].m_f, b.scenes[i].m_f);
    EXPECT_EQ(a.scenes[i].c_f, b.scenes[i].c_f);
    m_f += a.scenes[i].m_f;
  }
  EXPECT_NEAR(a.m_f, m_f / 12.0, 1e-12);
  const std::string csv = metric_report_csv(a);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 13);
  EXPECT_EQ(metric_report_to_json(a)["scenes"].size(), 12u);
}

TEST(Spearman, ExtremesTiesAndConstants) {
  EXPECT_NEAR(spearman({1, 2, 3, 4, 5}, {50, 40, 30, 20, 10}), -1.0, 1e-12);
  EXPECT_NEAR(spearman({1, 2, 3}, {1, 5, 9}), 1.0, 1e-12);
  EXPECT_EQ(spearman({0.1, 0.5, 0.9}, {70, 70, 70}), 0.0);
  // Average ranks a = (1, 2.5, 2.5, 4), b = (1, 3, 2, 4); Pearson of the ranks.
  const std::vector<double> ra{1, 2.5, 2.5, 4}, rb{1, 3, 2, 4};
  double num = 0.0, da = 0.0, db = 0.0;
  for (int i = 0; i < 4; ++i) {
    num += (ra[i] - 2.5) * (rb[i] - 2.5);
    da += (ra[i] - 2.5) * (ra[i] - 2.5);
    db += (rb[i] - 2.5) * (rb[i] - 2.5);
  }
  EXPECT_NEAR(spearman({1, 2, 2, 3}, {1, 3, 2, 4}), num / std::sqrt(da * db), 1e-12);
}

TEST(UncertaintyAnalysis, BinsAndCorrelations) {
  std::vector<double> u;
  std::vector<SceneMetrics> rows;
  for (int i = 0; i < 20; ++i) {
    u.push_back(0.01 * i);
    rows.push_back({"s", 100.0 - i, 50.0, 80.0 - 2 * i});
  }
  const UncertaintyAnalysis a = uncertainty_analysis(u, rows, 4);
  EXPECT_NEAR(a.rho_m_f, -1.0, 1e-12);
  EXPECT_EQ(a.rho_detect, 0.0);
  EXPECT_NEAR(a.rho_c_f, -1.0, 1e-12);
  ASSERT_EQ(a.bins.size(), 4u);
  std::size_t total = 0;
  for (const auto& b : a.bins) total += b.count;
  EXPECT_EQ(total, 20u);
  EXPECT_GT(a.bins.front().mean_m_f, a.bins.back().mean_m_f);
  EXPECT_THROW(uncertainty_analysis({}, {}), DataError);
  EXPECT_TRUE(uncertainty_analysis_to_json(a).contains("bins"));
}
