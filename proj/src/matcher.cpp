#include "lgwae/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace lgwae {

std::vector<long> Assignment::label_of_pred(std::size_t n_pred) const {
  std::vector<long> out(n_pred, -1);
  for (auto [p, l] : pairs) out[p] = static_cast<long>(l);
  return out;
}

namespace {

// Shortest augmenting path with potentials; requires rows <= cols.
// Returns the column assigned to each row.
std::vector<std::size_t> solve_rows_le_cols(const Tensor& cost, std::size_t n, std::size_t m) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost.at(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> row_to_col(n, 0);
  for (std::size_t j = 1; j <= m; ++j) {
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  }
  return row_to_col;
}

}  // namespace

Assignment hungarian(const Tensor& cost) {
  const std::size_t n = cost.rows();
  const std::size_t m = cost.cols();
  if (cost.rank() != 2 || n == 0 || m == 0) throw std::invalid_argument("hungarian: empty cost matrix");
  if (!cost.all_finite()) throw std::invalid_argument("hungarian: cost matrix contains NaN or inf");

  Assignment a;
  if (n <= m) {
    const auto cols = solve_rows_le_cols(cost, n, m);
    for (std::size_t i = 0; i < n; ++i) a.pairs.emplace_back(i, cols[i]);
  } else {
    Tensor t(Shape{m, n});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) t.at(j, i) = cost.at(i, j);
    }
    const auto rows = solve_rows_le_cols(t, m, n);
    for (std::size_t j = 0; j < m; ++j) a.pairs.emplace_back(rows[j], j);
    std::sort(a.pairs.begin(), a.pairs.end());
  }
  std::vector<char> pred_used(n, 0), label_used(m, 0);
  for (auto [i, j] : a.pairs) {
    pred_used[i] = 1;
    label_used[j] = 1;
    a.total_cost += cost.at(i, j);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!pred_used[i]) a.unmatched_pred.push_back(i);
  }
  for (std::size_t j = 0; j < m; ++j) {
    if (!label_used[j]) a.unmatched_label.push_back(j);
  }
  return a;
}

Tensor centerline_cost_matrix(const Tensor& pred_points, std::span<const double> pred_existence,
                              const Tensor& label_points, double w_exist) {
  const std::size_t n = pred_points.rows();
  const std::size_t m = label_points.rows();
  const std::size_t k = pred_points.cols();
  if (label_points.cols() != k) {
    throw ShapeError("match_centerlines: control-point widths differ " + shape_string(pred_points.shape()) + " vs " +
                     shape_string(label_points.shape()));
  }
  if (pred_existence.size() != n) throw ShapeError("match_centerlines: existence count differs from predictions");
  Tensor cost(Shape{n, m});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < k; ++c) s += std::abs(pred_points.at(i, c) - label_points.at(j, c));
      cost.at(i, j) = s / static_cast<double>(k) - w_exist * pred_existence[i];
    }
  }
  return cost;
}

Tensor control_point_rows(const LaneGraph& graph) {
  const std::size_t n = graph.size();
  const std::size_t b = graph.degree();
  Tensor out(Shape{n, 2 * b});
  for (std::size_t i = 0; i < n; ++i) {
    const auto& cps = graph.centerlines[i].control_points;
    if (cps.size() != b) throw ShapeError("control_point_rows: centerlines of different degree");
    for (std::size_t k = 0; k < b; ++k) {
      out.at(i, 2 * k) = cps[k].x;
      out.at(i, 2 * k + 1) = cps[k].y;
    }
  }
  return out;
}

Assignment match_centerlines(const LaneGraph& pred, const LaneGraph& label, double w_exist) {
  Assignment a;
  if (pred.empty() || label.empty()) {
    for (std::size_t i = 0; i < pred.size(); ++i) a.unmatched_pred.push_back(i);
    for (std::size_t j = 0; j < label.size(); ++j) a.unmatched_label.push_back(j);
    return a;
  }
  if (pred.degree() != label.degree()) throw ShapeError("match_centerlines: graphs use different Bezier degrees");
  std::vector<double> existence(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) existence[i] = pred.centerlines[i].existence;
  return hungarian(centerline_cost_matrix(control_point_rows(pred), existence, control_point_rows(label), w_exist));
}

}  // namespace lgwae
