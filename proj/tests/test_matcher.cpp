#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "lgwae/matcher.hpp"
#include "support.hpp"

using namespace lgwae;

namespace {

// Exhaustive minimum over all injections of the smaller side into the larger.
double brute_force(const Tensor& cost) {
  const std::size_t n = cost.rows(), m = cost.cols();
  const bool rows_small = n <= m;
  const std::size_t small = rows_small ? n : m, large = rows_small ? m : n;
  std::vector<std::size_t> perm(large);
  std::iota(perm.begin(), perm.end(), 0);
  double best = 1e300;
  do {
    double total = 0.0;
    for (std::size_t i = 0; i < small; ++i) total += rows_small ? cost.at(i, perm[i]) : cost.at(perm[i], i);
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

void expect_partition(const Assignment& a, std::size_t n, std::size_t m) {
  std::vector<int> rows(n, 0), cols(m, 0);
  for (auto [p, l] : a.pairs) {
    ++rows[p];
    ++cols[l];
  }
  for (std::size_t p : a.unmatched_pred) ++rows[p];
  for (std::size_t l : a.unmatched_label) ++cols[l];
  for (int c : rows) EXPECT_EQ(c, 1);
  for (int c : cols) EXPECT_EQ(c, 1);
  EXPECT_EQ(a.pairs.size(), std::min(n, m));
}

}  // namespace

TEST(Hungarian, DiagonalOptimum) {
  const Assignment a = hungarian(Tensor::matrix({{1, 2}, {2, 1}}));
  EXPECT_EQ(a.pairs, (std::vector<std::pair<std::size_t, std::size_t>>{{0, 0}, {1, 1}}));
  EXPECT_EQ(a.total_cost, 2.0);
}

TEST(Hungarian, SingleRow) {
  const Assignment a = hungarian(Tensor::matrix({{5, 1, 9}}));
  ASSERT_EQ(a.pairs.size(), 1u);
  EXPECT_EQ(a.pairs[0], (std::pair<std::size_t, std::size_t>{0, 1}));
  EXPECT_EQ(a.unmatched_label, (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(a.label_of_pred(1), (std::vector<long>{1}));
}

TEST(Hungarian, MatchesBruteForce) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> dim(1, 6);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = dim(rng), m = dim(rng);
    const Tensor cost = fixtures::random_tensor({n, m}, rng, 0.0, 10.0);
    const Assignment a = hungarian(cost);
    expect_partition(a, n, m);
    double total = 0.0;
    for (auto [p, l] : a.pairs) total += cost.at(p, l);
    EXPECT_NEAR(a.total_cost, total, 1e-9);
    EXPECT_NEAR(a.total_cost, brute_force(cost), 1e-9) << n << "x" << m;
  }
}

TEST(Hungarian, TransposeAndShiftInvariance) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor cost = fixtures::random_tensor({4, 6}, rng, -3.0, 3.0);
    Tensor t(Shape{6, 4});
    Tensor shifted = cost;
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 6; ++j) {
        t.at(j, i) = cost.at(i, j);
        shifted.at(i, j) += 7.5;
      }
    }
    const Assignment a = hungarian(cost);
    EXPECT_NEAR(hungarian(t).total_cost, a.total_cost, 1e-9);
    EXPECT_EQ(hungarian(shifted).pairs, a.pairs);
  }
}

TEST(Hungarian, RejectsBadInput) {
  EXPECT_THROW(hungarian(Tensor(Shape{0, 3})), std::invalid_argument);
  Tensor c = Tensor::matrix({{1, 2}, {3, 4}});
  c.at(1, 0) = std::nan("");
  EXPECT_THROW(hungarian(c), std::invalid_argument);
  c.at(1, 0) = INFINITY;
  EXPECT_THROW(hungarian(c), std::invalid_argument);
}

TEST(MatchCenterlines, SelfMatchUnderPermutation) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const LaneGraph g = fixtures::random_graph(rng, 5);
    std::vector<std::size_t> perm(5);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    LaneGraph p = g;
    for (std::size_t i = 0; i < 5; ++i) p.centerlines[i] = g.centerlines[perm[i]];
    const Assignment a = match_centerlines(p, g, 0.0);
    EXPECT_NEAR(a.total_cost, 0.0, 1e-12);
    for (auto [pi, li] : a.pairs) EXPECT_EQ(li, perm[pi]);
  }
}

TEST(MatchCenterlines, CostMatrixFormula) {
  const Tensor pred = Tensor::matrix({{0.0, 0.0, 1.0, 1.0}});
  const Tensor label = Tensor::matrix({{0.5, 0.0, 1.0, 0.5}});
  const std::vector<double> ex{0.8};
  const Tensor c = centerline_cost_matrix(pred, ex, label, 0.5);
  EXPECT_DOUBLE_EQ(c.at(0, 0), (0.5 + 0.0 + 0.0 + 0.5) / 4.0 - 0.5 * 0.8);
}

TEST(MatchCenterlines, FiveVersusFourMatchesBruteForce) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const LaneGraph pred = fixtures::random_graph(rng, 5);
    const LaneGraph label = fixtures::random_graph(rng, 4);
    std::vector<double> ex;
    for (const auto& c : pred.centerlines) ex.push_back(c.existence);
    const Tensor cost = centerline_cost_matrix(control_point_rows(pred), ex, control_point_rows(label), 0.5);
    const Assignment a = match_centerlines(pred, label);
    expect_partition(a, 5, 4);
    EXPECT_NEAR(a.total_cost, brute_force(cost), 1e-9);
  }
}

TEST(MatchCenterlines, EmptySideGivesEmptyAssignment) {
  std::mt19937_64 rng(1);
  const LaneGraph g = fixtures::random_graph(rng, 3);
  const Assignment a = match_centerlines(LaneGraph{}, g);
  EXPECT_TRUE(a.pairs.empty());
  EXPECT_EQ(a.unmatched_label.size(), 3u);
  const Assignment b = match_centerlines(g, LaneGraph{});
  EXPECT_EQ(b.unmatched_pred.size(), 3u);
}
