#pragma once

#include <cstddef>

#include "lgwae/autodiff.hpp"

namespace lgwae::ad {

/// Projection weights of one attention block; weights are d x d, biases 1 x d.
struct AttentionParams {
  Var wq, bq, wk, bk, wv, bv, wo, bo;
};

/// Scaled dot-product attention over n_heads column groups of the projected
/// inputs. queries is Lq x d; keys and values are Lk x d (pre-projection).
/// Throws ConfigError when d is not divisible by n_heads.
Var multi_head_attention(Var queries, Var keys, Var values, const AttentionParams& params, std::size_t n_heads);

}  // namespace lgwae::ad
