#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gansearch/autodiff.hpp"
#include "gansearch/tensor.hpp"

namespace gansearch {

enum class UpsampleMode { kNearest = 0, kBilinear = 1 };
enum class NormMode { kBatch = 0, kInstance = 1, kNone = 2 };

// ---------------------------------------------------------------------------
// Plain forward kernels over caller-owned tensors. Pure functions; safe to
// call concurrently on disjoint data.
// ---------------------------------------------------------------------------

// x: [N,C,H,W], w: [O,I,k,k] (I==C, k in {1,3}), b: [O].
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding);

// Fixed kernel 4 / stride 2 / padding 1; doubles the spatial size.
// x: [N,C,H,W], w: [I,O,4,4] (I==C), b: [O] -> [N,O,2H,2W].
Tensor transposed_conv2d(const Tensor& x, const Tensor& w, const Tensor& b);

// Factor-2 upsampling. Bilinear uses half-pixel-center sampling.
Tensor upsample2x(const Tensor& x, UpsampleMode mode);

// 2x2 average pooling (H, W must be even).
Tensor avg_pool2x(const Tensor& x);

// Batch mode normalizes over (N,H,W) per channel, instance over (H,W) per
// sample-channel, none is the identity. gamma/beta: [C]. Batch statistics
// are always the current batch's (no running averages); `training` gates the
// N==1 degenerate-batch error for batch mode.
Tensor normalize(const Tensor& x, NormMode mode, const Tensor& gamma, const Tensor& beta,
                 bool training);

// Standard LSTM cell. x: [B,In], h,c: [B,H], w_ih: [4H,In], w_hh: [4H,H],
// b: [4H]; gate order i,f,g,o. Returns (h', c').
std::pair<Tensor, Tensor> lstm_step(const Tensor& x, const Tensor& h, const Tensor& c,
                                    const Tensor& w_ih, const Tensor& w_hh, const Tensor& b);

// ---------------------------------------------------------------------------
// Tape ops (same math, recorded for reverse mode).
// ---------------------------------------------------------------------------

Value conv2d(GradientContext& g, Value x, Value w, Value b, int stride, int padding);
Value transposed_conv2d(GradientContext& g, Value x, Value w, Value b);
Value upsample2x(GradientContext& g, Value x, UpsampleMode mode);
Value avg_pool2x(GradientContext& g, Value x);
Value normalize(GradientContext& g, Value x, NormMode mode, Value gamma, Value beta,
                bool training);
std::pair<Value, Value> lstm_step(GradientContext& g, Value x, Value h, Value c, Value w_ih,
                                  Value w_hh, Value b);

// out = x * w^T + b. x: [N,In], w: [Out,In], b: [Out].
Value linear(GradientContext& g, Value x, Value w, Value b);

Value relu(GradientContext& g, Value x);
Value tanh(GradientContext& g, Value x);
Value exp(GradientContext& g, Value x);
// out = alpha * x + beta, elementwise with scalar coefficients.
Value affine(GradientContext& g, Value x, float alpha, float beta);
Value add(GradientContext& g, Value a, Value b);
Value mul(GradientContext& g, Value a, Value b);
Value reshape(GradientContext& g, Value x, std::vector<int> shape);
Value sum_all(GradientContext& g, Value x);
Value mean_all(GradientContext& g, Value x);
// [N,C,H,W] -> [N,C], summing over the spatial dims.
Value spatial_sum(GradientContext& g, Value x);
// Row-wise log-softmax on [N,V].
Value log_softmax_rows(GradientContext& g, Value x);
// out[n] = x[n, idx[n]]; x: [N,V] -> [N].
Value gather_rows(GradientContext& g, Value x, std::vector<int> idx);
// One row of an embedding table: [R,D] -> [1,D].
Value embed_row(GradientContext& g, Value table, int row);

}  // namespace gansearch
