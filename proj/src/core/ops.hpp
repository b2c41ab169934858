#pragma once
#include <utility>
#include <vector>

#include "core/tensor.hpp"

namespace steerlab::ops {

// Elementwise; shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

// y_i = factor * x_i, factor applied at f64 then rounded once per element.
Tensor scale(const Tensor& x, double factor);

// y = xW + b. x:[B,I], W:[I,O], b:[O].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// 3x3 cross-correlation, zero padding 1, stride 1. x:[B,C,H,W], k:[O,C,3,3].
Tensor conv2d(const Tensor& x, const Tensor& k, const Tensor& b);

// Pointwise channel mix. x:[B,C,H,W], k:[O,C].
Tensor conv1x1(const Tensor& x, const Tensor& k, const Tensor& b);

// Affine-free GroupNorm: per-(batch,group) zero mean / unit variance.
// Learned affine terms, where wanted, are supplied by separate ops.
Tensor group_norm(const Tensor& x, int groups, double eps = 1e-5);

Tensor silu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

Tensor sum(const Tensor& x);   // scalar
Tensor mean(const Tensor& x);  // scalar

// Mean squared error over all elements, accumulated at f64.
Tensor mse(const Tensor& pred, const Tensor& target);

// Mean negative log-likelihood over rows; log-sum-exp at f64.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

Tensor avgpool2(const Tensor& x);   // 2x2 mean, H and W even
Tensor upsample2(const Tensor& x);  // nearest-neighbor 2x

// x:[B,C,H,W] + bias[rb,C] broadcast over spatial dims; rb is 1 or B.
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);

// y = gamma[b,c] * x[b,c,h,w] + beta[b,c].
Tensor film(const Tensor& x, const Tensor& gamma, const Tensor& beta);

// Row gather + pair mean: out[b] = 0.5*(table[idx[b].first] + table[idx[b].second]).
// A pair of (-1,-1) yields a zero row (the "null condition") with no gradient.
Tensor cond_embed(const Tensor& table, const std::vector<std::pair<int, int>>& idx);

// Same data, new shape (element count preserved).
Tensor reshape(const Tensor& x, std::vector<int> shape);

// [D] or [1,D] -> [B,D].
Tensor broadcast_rows(const Tensor& row, int b);

Tensor global_mean_pool(const Tensor& x);  // [B,C,H,W] -> [B,C]

// Utility (no gradient): stack [C,H,W] tensors into [B,C,H,W].
Tensor stack_batch(const std::vector<Tensor>& xs);

bool all_finite(const Tensor& x);

}  // namespace steerlab::ops
