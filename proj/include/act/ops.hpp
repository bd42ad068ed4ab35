#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "act/rng.hpp"
#include "act/tensor.hpp"

// Differentiable operations. Matrices are 2-D row-major; ops that take
// "rows" fold every leading dimension. Broadcasting exists only for
// trailing-dimension affine terms (add_row, layer_norm gain/bias, linear bias).
namespace act::ops {

Tensor matmul(const Tensor& a, const Tensor& b);
// x[rows×in] · w[in×out] + bias[out]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_row(const Tensor& x, const Tensor& row);
Tensor scale(const Tensor& x, float s);
Tensor add_scalar(const Tensor& x, float s);

Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor abs(const Tensor& x);
Tensor square(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, float eps = 1e-5f);

// Multi-head scaled dot-product attention over already-projected q, k, v.
// q is [batch·Lq × d], k and v are [batch·Lk × d]; scale is 1/sqrt(d/heads).
// key_mask (optional, batch·Lk entries) marks valid keys with 1.
Tensor softmax_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads,
                         std::size_t batch = 1, std::span<const std::uint8_t> key_mask = {});

// The attention probabilities softmax_attention uses, laid out
// [batch][head][Lq][Lk]. No graph is recorded.
std::vector<float> attention_weights(const Tensor& q, const Tensor& k, std::size_t heads, std::size_t batch = 1,
                                     std::span<const std::uint8_t> key_mask = {});

// Inverted dropout; identity when !training or p == 0.
Tensor dropout(const Tensor& x, float p, Rng& rng, bool training);

Tensor reshape(const Tensor& x, Shape shape);
Tensor concat_rows(std::span<const Tensor> parts);
// Each piece is [batch·n_i × d]; the result places, for every batch item,
// its rows of piece 0, then piece 1, ... giving [batch·Σn_i × d].
Tensor interleave_sequences(std::span<const Tensor> pieces, std::size_t batch);
// [n×d] repeated `times` times -> [times·n × d]
Tensor tile_rows(const Tensor& x, std::size_t times);
Tensor select_rows(const Tensor& x, std::span<const std::size_t> rows);
// [batch·n × d] -> [batch × d], mean over each group of n rows.
Tensor mean_rows_grouped(const Tensor& x, std::size_t batch);

// Channels-last 2-D convolution. x is [B, H, W, Cin], w is [kh·kw·Cin × Cout]
// with patch layout (ky, kx, cin), bias is [Cout]. Zero padding.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t kernel, std::size_t stride,
              std::size_t pad);

}  // namespace act::ops
