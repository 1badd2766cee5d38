#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "pds/tensor.hpp"

namespace pds {

using Extent3 = std::array<std::size_t, 3>;

// Convolutions operate on single samples: 2-D inputs are [C,H,W], 3-D inputs
// are [C,D,H,W]. Output extents follow floor((in + 2*pad - k) / stride) + 1.
// Bias may be an undefined tensor.

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, std::size_t stride,
                      std::size_t pad);

template <typename T>
BasicTensor<T> conv3d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, Extent3 stride, Extent3 pad);

template <typename T>
BasicTensor<T> conv3d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, std::size_t stride,
                      std::size_t pad) {
  return conv3d(input, weight, bias, Extent3{stride, stride, stride},
                Extent3{pad, pad, pad});
}

/// Adjoint of conv3d. Weight layout is [C_in, C_out, kd, kh, kw], i.e. the
/// same array a conv3d mapping C_out -> C_in would use. Output extent per
/// axis is stride*(in-1) + k - 2*pad + output_padding, output_padding < stride.
template <typename T>
BasicTensor<T> transposed_conv3d(const BasicTensor<T>& input,
                                 const BasicTensor<T>& weight,
                                 const BasicTensor<T>& bias, Extent3 stride,
                                 Extent3 pad, Extent3 output_padding = {0, 0, 0});

template <typename T>
BasicTensor<T> transposed_conv3d(const BasicTensor<T>& input,
                                 const BasicTensor<T>& weight,
                                 const BasicTensor<T>& bias, std::size_t stride,
                                 std::size_t pad) {
  return transposed_conv3d(input, weight, bias, Extent3{stride, stride, stride},
                           Extent3{pad, pad, pad});
}

/// Per-channel normalization over all trailing (spatial) axes of [C, ...].
template <typename T>
BasicTensor<T> instance_norm(const BasicTensor<T>& input,
                             const BasicTensor<T>& gamma,
                             const BasicTensor<T>& beta, double eps);

template <typename T>
BasicTensor<T> leaky_relu(const BasicTensor<T>& input, double slope);

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& input, std::size_t axis);

template <typename T>
BasicTensor<T> log_softmax(const BasicTensor<T>& input, std::size_t axis);

template <typename T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& inputs, std::size_t axis);

/// Joins equally shaped tensors along a new axis inserted at `axis`.
template <typename T>
BasicTensor<T> stack(const std::vector<BasicTensor<T>>& inputs, std::size_t axis);

template <typename T>
BasicTensor<T> slice(const BasicTensor<T>& input, std::size_t axis,
                     std::size_t start, std::size_t length);

/// out[..., x] = in[..., x - amount] along the last axis; vacated columns are 0.
template <typename T>
BasicTensor<T> shift_right(const BasicTensor<T>& input, std::size_t amount);

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& input, Shape shape);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, double factor);
template <typename T>
BasicTensor<T> neg(const BasicTensor<T>& a);
/// Subgradient 0 at the origin.
template <typename T>
BasicTensor<T> abs(const BasicTensor<T>& a);
template <typename T>
BasicTensor<T> log(const BasicTensor<T>& a);

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& a);
template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& a);
/// Reduces `axis` away.
template <typename T>
BasicTensor<T> sum_axis(const BasicTensor<T>& a, std::size_t axis);

template <typename T>
BasicTensor<T> operator+(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return add(a, b);
}
template <typename T>
BasicTensor<T> operator-(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return sub(a, b);
}
template <typename T>
BasicTensor<T> operator*(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return mul(a, b);
}

}  // namespace pds
