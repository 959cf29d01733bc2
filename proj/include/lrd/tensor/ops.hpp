#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lrd/tensor/tensor.hpp"

namespace lrd {

// Elementwise arithmetic. Binary ops require identical shapes.
template <typename T> BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> scale(const BasicTensor<T>& x, T factor);
template <typename T> BasicTensor<T> add_scalar(const BasicTensor<T>& x, T offset);

/// Multiplies x by w broadcast over x's trailing axes; w.shape() must be a
/// prefix of x.shape() (e.g. [N] or [N,C] against [N,C,H,W]).
template <typename T> BasicTensor<T> broadcast_mul(const BasicTensor<T>& x, const BasicTensor<T>& w);

/// b + w * (a - b) with w broadcast like broadcast_mul, clamped into the
/// elementwise [min(a,b), max(a,b)] envelope so rounding never leaves it.
/// Gradients are those of the unclamped expression.
template <typename T>
BasicTensor<T> convex_mix(const BasicTensor<T>& a, const BasicTensor<T>& b, const BasicTensor<T>& w);

template <typename T> BasicTensor<T> relu(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> sigmoid(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> exp(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> log(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> abs(const BasicTensor<T>& x);

// Full reductions to a scalar of shape [].
template <typename T> BasicTensor<T> sum(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> mean(const BasicTensor<T>& x);

/// Max-stabilized softmax along `axis` (default: last).
template <typename T> BasicTensor<T> softmax(const BasicTensor<T>& x, int axis = -1);

/// y = x · wᵀ + b with x [N,in], w [out,in], b [out].
template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b);

/// Cross-correlation. `bias` may be undefined.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, int stride, int padding);

template <typename T> BasicTensor<T> max_pool2d(const BasicTensor<T>& x, int kernel, int stride);
template <typename T> BasicTensor<T> global_average_pool(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> upsample_nearest_2x(const BasicTensor<T>& x);

template <typename T> BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape);
/// Concatenation along axis 1 (channels).
template <typename T> BasicTensor<T> concat_channels(const std::vector<BasicTensor<T>>& xs);
/// Axis-1 slice [start, start+length).
template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& x, std::int64_t start, std::int64_t length);

/// [N,C,H,W] -> [N*H*W, C], rows ordered (n, y, x).
template <typename T> BasicTensor<T> to_rows(const BasicTensor<T>& x);
/// Concatenation of 2-D tensors along axis 0.
template <typename T> BasicTensor<T> concat_rows(const std::vector<BasicTensor<T>>& xs);
template <typename T>
BasicTensor<T> gather_rows(const BasicTensor<T>& x, std::span<const std::int64_t> rows);

// Loss primitives; each returns the scalar SUM over its rows.

/// Sigmoid focal loss over logits [R,K]; labels[r] in [0,K) or -1 for
/// background (all-negative one-hot).
template <typename T>
BasicTensor<T> sigmoid_focal_loss(const BasicTensor<T>& logits, std::span<const int> labels,
                                  T alpha, T gamma);

/// Binary cross-entropy on logits of any shape against same-length targets.
template <typename T>
BasicTensor<T> bce_with_logits(const BasicTensor<T>& logits, std::span<const T> targets);

/// -ln(IoU) between positive (l,t,r,b) distance rows [R,4] measured from a
/// shared location.
template <typename T>
BasicTensor<T> iou_loss(const BasicTensor<T>& pred, std::span<const T> target);

}  // namespace lrd
