#pragma once

// Straight-line reimplementation of the model forward pass on nested vectors.
// Shares nothing with the autodiff graph code beyond the parameter names.

#include <cmath>
#include <string>
#include <vector>

#include "lgwae/wae_model.hpp"

namespace lgwae::oracle {

using Mat = std::vector<std::vector<double>>;

inline Mat from_tensor(const Tensor& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t.at(r, c);
  }
  return m;
}

inline Mat linear(const ModelParams& p, const std::string& name, const Mat& x, bool bias = true) {
  const Mat w = from_tensor(p.at(name + ".w"));
  Mat out(x.size(), std::vector<double>(w[0].size(), 0.0));
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = 0; j < w[0].size(); ++j) {
      double s = bias ? p.at(name + ".b")[j] : 0.0;
      for (std::size_t k = 0; k < w.size(); ++k) s += x[i][k] * w[k][j];
      out[i][j] = s;
    }
  }
  return out;
}

inline Mat gelu(Mat x) {
  for (auto& row : x) {
    for (double& v : row) v = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
  }
  return x;
}

inline Mat layer_norm(const ModelParams& p, const std::string& name, const Mat& x) {
  const Tensor& g = p.at(name + ".g");
  const Tensor& b = p.at(name + ".b");
  Mat out = x;
  for (auto& row : out) {
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(row.size());
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - mean) / std::sqrt(var + 1e-5) * g[j] + b[j];
  }
  return out;
}

inline Mat attention(const ModelParams& p, const std::string& name, const Mat& queries, const Mat& memory,
                     std::size_t heads) {
  const Mat q = linear(p, name + ".q", queries);
  const Mat k = linear(p, name + ".k", memory);
  const Mat v = linear(p, name + ".v", memory);
  const std::size_t d = q[0].size();
  const std::size_t hd = d / heads;
  Mat merged(q.size(), std::vector<double>(d, 0.0));
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < q.size(); ++i) {
      std::vector<double> score(k.size());
      double mx = -1e300;
      for (std::size_t j = 0; j < k.size(); ++j) {
        double s = 0.0;
        for (std::size_t c = h * hd; c < (h + 1) * hd; ++c) s += q[i][c] * k[j][c];
        score[j] = s / std::sqrt(static_cast<double>(hd));
        mx = std::max(mx, score[j]);
      }
      double z = 0.0;
      for (double& s : score) z += (s = std::exp(s - mx));
      for (std::size_t c = h * hd; c < (h + 1) * hd; ++c) {
        double acc = 0.0;
        for (std::size_t j = 0; j < k.size(); ++j) acc += score[j] / z * v[j][c];
        merged[i][c] = acc;
      }
    }
  }
  return linear(p, name + ".o", merged);
}

inline void add_into(Mat& x, const Mat& y) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = 0; j < x[i].size(); ++j) x[i][j] += y[i][j];
  }
}

inline Mat feed_forward(const ModelParams& p, const std::string& name, const Mat& x) {
  return linear(p, name + ".fc2", gelu(linear(p, name + ".fc1", x)));
}

inline std::vector<double> encode(const Mat& rows, const ModelParams& p) {
  const ModelConfig& c = p.config();
  Mat x = linear(p, "input.fc2", gelu(linear(p, "input.fc1", rows)));
  x.push_back(from_tensor(p.at("summarizer"))[0]);
  for (std::size_t l = 0; l < c.enc_layers; ++l) {
    const std::string n = "enc." + std::to_string(l);
    const Mat h = layer_norm(p, n + ".ln1", x);
    add_into(x, attention(p, n + ".attn", h, h, c.n_heads));
    add_into(x, feed_forward(p, n + ".ffn", layer_norm(p, n + ".ln2", x)));
  }
  return x.back();
}

struct Decoded {
  std::vector<double> existence;  // probabilities
  Mat control_points;
  Mat assoc;
  Mat connectivity;  // probabilities
};

inline Decoded decode(const std::vector<double>& z, const ModelParams& p) {
  const ModelConfig& c = p.config();
  Mat memory{z};
  for (const auto& row : from_tensor(p.at("helpers"))) memory.push_back(row);
  Mat q = from_tensor(p.at("queries"));
  for (std::size_t l = 0; l < c.dec_layers; ++l) {
    const std::string n = "dec." + std::to_string(l);
    const Mat h = layer_norm(p, n + ".ln1", q);
    add_into(q, attention(p, n + ".self", h, h, c.n_heads));
    add_into(q, attention(p, n + ".cross", layer_norm(p, n + ".ln2", q), memory, c.n_heads));
    add_into(q, feed_forward(p, n + ".ffn", layer_norm(p, n + ".ln3", q)));
  }
  const Mat out = layer_norm(p, "dec.ln_out", q);
  auto sigmoid = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  Decoded d;
  for (const auto& row : linear(p, "head.exist", out)) d.existence.push_back(sigmoid(row[0]));
  d.control_points = linear(p, "head.cp", out);
  for (auto& row : d.control_points) {
    for (double& v : row) v = sigmoid(v);
  }
  d.assoc = linear(p, "head.assoc", out);
  // p(x -> y) = sigmoid(MLP([assoc_x ; assoc_y])) with the first layer on the concatenation.
  const Mat wf = from_tensor(p.at("conn.from.w"));
  const Mat wt = from_tensor(p.at("conn.to.w"));
  const std::size_t a = wf.size();
  const std::size_t hidden = wf[0].size();
  Mat w1(2 * a, std::vector<double>(hidden));
  for (std::size_t k = 0; k < a; ++k) {
    w1[k] = wf[k];
    w1[a + k] = wt[k];
  }
  const std::size_t n = d.assoc.size();
  d.connectivity.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t x = 0; x < n; ++x) {
    for (std::size_t y = 0; y < n; ++y) {
      std::vector<double> cat = d.assoc[x];
      cat.insert(cat.end(), d.assoc[y].begin(), d.assoc[y].end());
      std::vector<double> h(hidden);
      for (std::size_t j = 0; j < hidden; ++j) {
        double s = p.at("conn.to.b")[j];
        for (std::size_t k = 0; k < 2 * a; ++k) s += cat[k] * w1[k][j];
        h[j] = 0.5 * s * (1.0 + std::erf(s / std::sqrt(2.0)));
      }
      double logit = p.at("conn.out.b")[0];
      for (std::size_t j = 0; j < hidden; ++j) logit += h[j] * p.at("conn.out.w")[j];
      d.connectivity[x][y] = sigmoid(logit);
    }
  }
  return d;
}

}  // namespace lgwae::oracle
