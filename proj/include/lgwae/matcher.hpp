#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "lgwae/lane_graph.hpp"
#include "lgwae/tensor.hpp"

namespace lgwae {

/// Partial one-to-one pairing of predicted (rows) and label (columns) items.
struct Assignment {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (pred, label), sorted by pred
  std::vector<std::size_t> unmatched_pred;
  std::vector<std::size_t> unmatched_label;
  double total_cost = 0.0;

  /// label index per prediction, -1 when unmatched.
  std::vector<long> label_of_pred(std::size_t n_pred) const;
};

/// Minimum-cost assignment of size min(n, m) on an n x m cost matrix.
/// Throws std::invalid_argument on empty or non-finite input.
Assignment hungarian(const Tensor& cost);

/// cost[i][j] = mean |pred_i - label_j| over the 2B coordinates - w_exist * existence_i.
/// Control points are rows of flat (x0, y0, x1, y1, ...) values.
Tensor centerline_cost_matrix(const Tensor& pred_points, std::span<const double> pred_existence,
                              const Tensor& label_points, double w_exist);

/// Flat control-point rows of a graph: size() x 2B.
Tensor control_point_rows(const LaneGraph& graph);

/// Hungarian matching of centerlines; an empty side gives an empty assignment.
Assignment match_centerlines(const LaneGraph& pred, const LaneGraph& label, double w_exist = 0.5);

}  // namespace lgwae
