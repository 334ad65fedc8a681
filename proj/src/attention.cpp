#include "lgwae/attention.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "lgwae/errors.hpp"

namespace lgwae::ad {

Var multi_head_attention(Var queries, Var keys, Var values, const AttentionParams& params, std::size_t n_heads) {
  const std::size_t d = queries.value().cols();
  if (n_heads == 0 || d % n_heads != 0) {
    throw ConfigError("attention: model dimension " + std::to_string(d) + " not divisible by " +
                      std::to_string(n_heads) + " heads");
  }
  const Var q = add_row(matmul(queries, params.wq), params.bq);
  const Var k = add_row(matmul(keys, params.wk), params.bk);
  const Var v = add_row(matmul(values, params.wv), params.bv);
  const std::size_t head_dim = d / n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<Var> heads;
  heads.reserve(n_heads);
  for (std::size_t h = 0; h < n_heads; ++h) {
    const std::size_t b = h * head_dim;
    const Var qh = slice_cols(q, b, b + head_dim);
    const Var kh = slice_cols(k, b, b + head_dim);
    const Var vh = slice_cols(v, b, b + head_dim);
    const Var weights = softmax_lastdim(scale(matmul(qh, transpose(kh)), inv_sqrt));
    heads.push_back(matmul(weights, vh));
  }
  const Var merged = n_heads == 1 ? heads.front() : concat_cols(heads);
  return add_row(matmul(merged, params.wo), params.bo);
}

}  // namespace lgwae::ad
