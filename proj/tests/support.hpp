#pragma once

// Shared fixtures for the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "lgwae/autodiff.hpp"
#include "lgwae/lane_graph.hpp"
#include "lgwae/tensor.hpp"
#include "lgwae/wae_model.hpp"

namespace lgwae::fixtures {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.data()) v = u(rng);
  return t;
}

/// Small model used where the desk config would only slow tests down.
inline ModelConfig tiny_config() {
  ModelConfig c;
  c.d_model = 16;
  c.n_heads = 2;
  c.enc_layers = 1;
  c.dec_layers = 1;
  c.n_queries = 6;
  c.n_helpers = 2;
  c.assoc_dim = 4;
  c.ffn_dim = 24;
  c.conn_hidden = 8;
  return c;
}

/// Graph with n centerlines of the given degree inside [0.1, 0.9]^2 and random edges.
inline LaneGraph random_graph(std::mt19937_64& rng, std::size_t n, std::size_t degree = 3, double edge_p = 0.3) {
  std::uniform_real_distribution<double> u(0.1, 0.9);
  std::uniform_real_distribution<double> e(0.05, 0.95);
  std::bernoulli_distribution edge(edge_p);
  LaneGraph g;
  for (std::size_t i = 0; i < n; ++i) {
    Centerline c;
    for (std::size_t k = 0; k < degree; ++k) c.control_points.push_back({u(rng), u(rng)});
    c.existence = e(rng);
    g.centerlines.push_back(std::move(c));
  }
  g.incidence = Incidence(n);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      if (a != b && edge(rng)) g.incidence.set(a, b);
    }
  }
  return g;
}

/// Result of comparing reverse-mode gradients with central differences.
struct GradCheck {
  double rel_error = 0.0;  // ||g_ad - g_fd|| / max(||g_ad||, ||g_fd||)
  double scale = 0.0;      // max(||g_ad||, ||g_fd||)
  std::size_t checked = 0;
};

using GraphFn = std::function<ad::Var(ad::Graph&, const std::vector<ad::Var>&)>;

/// Checks d(sum(w * f(inputs)))/d inputs, with fixed random projection
/// weights w, for up to max_entries entries per input (all when 0).
inline GradCheck check_gradient(const GraphFn& f, std::vector<Tensor> inputs, std::uint64_t seed = 1,
                                std::size_t max_entries = 0, double h = 1e-6) {
  std::mt19937_64 rng(seed);
  Tensor weights;
  bool have_weights = false;
  auto evaluate = [&](const std::vector<Tensor>& in, std::vector<Tensor>* grads) {
    ad::Graph g;
    std::vector<ad::Var> vars;
    for (const Tensor& t : in) vars.push_back(g.leaf(t, grads != nullptr));
    const ad::Var out = f(g, vars);
    if (!have_weights) {
      weights = random_tensor(out.shape(), rng, 0.5, 1.5);
      have_weights = true;
    }
    const ad::Var loss = ad::sum(ad::mul(out, g.leaf(weights)));
    if (grads != nullptr) {
      g.backward(loss);
      for (const ad::Var& v : vars) grads->push_back(g.grad(v));
    }
    return loss.value().item();
  };
  std::vector<Tensor> analytic;
  evaluate(inputs, &analytic);

  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  GradCheck out;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    std::vector<std::size_t> entries(inputs[t].numel());
    for (std::size_t i = 0; i < entries.size(); ++i) entries[i] = i;
    if (max_entries > 0 && entries.size() > max_entries) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(max_entries);
    }
    for (std::size_t i : entries) {
      const double orig = inputs[t][i];
      inputs[t][i] = orig + h;
      const double up = evaluate(inputs, nullptr);
      inputs[t][i] = orig - h;
      const double down = evaluate(inputs, nullptr);
      inputs[t][i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[t][i];
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
      ++out.checked;
    }
  }
  out.scale = std::sqrt(std::max(a2, n2));
  out.rel_error = out.scale > 0.0 ? std::sqrt(diff2) / out.scale : 0.0;
  return out;
}

}  // namespace lgwae::fixtures
