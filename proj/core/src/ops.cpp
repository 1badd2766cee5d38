#include "pds/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace pds {

namespace {

using detail::make_result;
using detail::Node;

// ---------------------------------------------------------------------------
// Raw convolution kernels on contiguous buffers.
//
// `in` is the input of a forward convolution [cin, in0, in1, in2], `out` its
// output [cout, out0, out1, out2] and `w` the weight [cout, cin, k0, k1, k2].
// The transposed convolution reuses the same three kernels with the roles of
// input and output swapped.

struct ConvGeom {
  std::size_t cin = 0;
  std::size_t cout = 0;
  Extent3 in{};
  Extent3 out{};
  Extent3 k{};
  Extent3 stride{};
  Extent3 pad{};

  std::size_t in_plane() const { return in[0] * in[1] * in[2]; }
  std::size_t out_plane() const { return out[0] * out[1] * out[2]; }
  std::size_t k_volume() const { return k[0] * k[1] * k[2]; }
};

// Output indices o in [lo, hi) with 0 <= o*stride + koff - pad < in_extent.
inline void valid_range(long koff, long pad, long stride, long in_extent,
                        long out_extent, long& lo, long& hi) {
  long shift = pad - koff;  // o*stride >= shift
  lo = shift <= 0 ? 0 : (shift + stride - 1) / stride;
  long top = in_extent - 1 + pad - koff;  // o*stride <= top
  hi = top < 0 ? 0 : top / stride + 1;
  hi = std::min(hi, out_extent);
  lo = std::min(lo, hi);
}

struct KernelTap {
  long lo[3];
  long hi[3];
  long off[3];  // input index = o*stride + off
};

inline bool make_tap(const ConvGeom& g, std::size_t a, std::size_t b,
                     std::size_t c, KernelTap& t) {
  const std::size_t kk[3] = {a, b, c};
  for (int ax = 0; ax < 3; ++ax) {
    valid_range(static_cast<long>(kk[ax]), static_cast<long>(g.pad[ax]),
                static_cast<long>(g.stride[ax]), static_cast<long>(g.in[ax]),
                static_cast<long>(g.out[ax]), t.lo[ax], t.hi[ax]);
    if (t.lo[ax] >= t.hi[ax]) return false;
    t.off[ax] = static_cast<long>(kk[ax]) - static_cast<long>(g.pad[ax]);
  }
  return true;
}

template <typename T>
void conv_forward_raw(const ConvGeom& g, const T* in, const T* w, T* out) {
  const long s0 = g.stride[0], s1 = g.stride[1], s2 = g.stride[2];
  for (std::size_t co = 0; co < g.cout; ++co) {
    T* out_c = out + co * g.out_plane();
    for (std::size_t ci = 0; ci < g.cin; ++ci) {
      const T* in_c = in + ci * g.in_plane();
      const T* w_c = w + (co * g.cin + ci) * g.k_volume();
      for (std::size_t a = 0; a < g.k[0]; ++a)
        for (std::size_t b = 0; b < g.k[1]; ++b)
          for (std::size_t c = 0; c < g.k[2]; ++c) {
            KernelTap t;
            if (!make_tap(g, a, b, c, t)) continue;
            const T wv = w_c[(a * g.k[1] + b) * g.k[2] + c];
            for (long o0 = t.lo[0]; o0 < t.hi[0]; ++o0) {
              const long i0 = o0 * s0 + t.off[0];
              for (long o1 = t.lo[1]; o1 < t.hi[1]; ++o1) {
                const long i1 = o1 * s1 + t.off[1];
                const T* in_row = in_c + (i0 * g.in[1] + i1) * g.in[2];
                T* out_row = out_c + (o0 * g.out[1] + o1) * g.out[2];
                for (long o2 = t.lo[2]; o2 < t.hi[2]; ++o2) {
                  out_row[o2] += wv * in_row[o2 * s2 + t.off[2]];
                }
              }
            }
          }
    }
  }
}

// d_in += W^T * d_out; this is also the forward pass of a transposed conv.
template <typename T>
void conv_backward_input_raw(const ConvGeom& g, const T* d_out, const T* w,
                             T* d_in) {
  const long s0 = g.stride[0], s1 = g.stride[1], s2 = g.stride[2];
  for (std::size_t co = 0; co < g.cout; ++co) {
    const T* dout_c = d_out + co * g.out_plane();
    for (std::size_t ci = 0; ci < g.cin; ++ci) {
      T* din_c = d_in + ci * g.in_plane();
      const T* w_c = w + (co * g.cin + ci) * g.k_volume();
      for (std::size_t a = 0; a < g.k[0]; ++a)
        for (std::size_t b = 0; b < g.k[1]; ++b)
          for (std::size_t c = 0; c < g.k[2]; ++c) {
            KernelTap t;
            if (!make_tap(g, a, b, c, t)) continue;
            const T wv = w_c[(a * g.k[1] + b) * g.k[2] + c];
            for (long o0 = t.lo[0]; o0 < t.hi[0]; ++o0) {
              const long i0 = o0 * s0 + t.off[0];
              for (long o1 = t.lo[1]; o1 < t.hi[1]; ++o1) {
                const long i1 = o1 * s1 + t.off[1];
                T* din_row = din_c + (i0 * g.in[1] + i1) * g.in[2];
                const T* dout_row = dout_c + (o0 * g.out[1] + o1) * g.out[2];
                for (long o2 = t.lo[2]; o2 < t.hi[2]; ++o2) {
                  din_row[o2 * s2 + t.off[2]] += wv * dout_row[o2];
                }
              }
            }
          }
    }
  }
}

template <typename T>
void conv_backward_weight_raw(const ConvGeom& g, const T* in, const T* d_out,
                              T* d_w) {
  const long s0 = g.stride[0], s1 = g.stride[1], s2 = g.stride[2];
  for (std::size_t co = 0; co < g.cout; ++co) {
    const T* dout_c = d_out + co * g.out_plane();
    for (std::size_t ci = 0; ci < g.cin; ++ci) {
      const T* in_c = in + ci * g.in_plane();
      T* dw_c = d_w + (co * g.cin + ci) * g.k_volume();
      for (std::size_t a = 0; a < g.k[0]; ++a)
        for (std::size_t b = 0; b < g.k[1]; ++b)
          for (std::size_t c = 0; c < g.k[2]; ++c) {
            KernelTap t;
            if (!make_tap(g, a, b, c, t)) continue;
            T acc = 0;
            for (long o0 = t.lo[0]; o0 < t.hi[0]; ++o0) {
              const long i0 = o0 * s0 + t.off[0];
              for (long o1 = t.lo[1]; o1 < t.hi[1]; ++o1) {
                const long i1 = o1 * s1 + t.off[1];
                const T* in_row = in_c + (i0 * g.in[1] + i1) * g.in[2];
                const T* dout_row = dout_c + (o0 * g.out[1] + o1) * g.out[2];
                for (long o2 = t.lo[2]; o2 < t.hi[2]; ++o2) {
                  acc += dout_row[o2] * in_row[o2 * s2 + t.off[2]];
                }
              }
            }
            dw_c[(a * g.k[1] + b) * g.k[2] + c] += acc;
          }
    }
  }
}

template <typename T>
void add_bias(std::vector<T>& out, std::span<const T> bias, std::size_t plane) {
  for (std::size_t c = 0; c < bias.size(); ++c) {
    std::fill(out.begin() + c * plane, out.begin() + (c + 1) * plane, bias[c]);
  }
}

template <typename T>
void accumulate_bias_grad(std::span<const T> d_out, std::vector<T>& d_bias,
                          std::size_t plane) {
  for (std::size_t c = 0; c < d_bias.size(); ++c) {
    T acc = 0;
    for (std::size_t i = 0; i < plane; ++i) acc += d_out[c * plane + i];
    d_bias[c] += acc;
  }
}

std::string axis_mismatch(const char* op, const char* what, std::size_t axis,
                          const Shape& a, const Shape& b) {
  return std::string(op) + ": " + what + " mismatch on axis " +
         std::to_string(axis) + " (" + shape_string(a) + " vs " +
         shape_string(b) + ")";
}

template <typename T>
void check_rank(const char* op, const char* name, const BasicTensor<T>& t,
                std::size_t rank) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + name + " must have rank " +
                     std::to_string(rank) + ", got " + shape_string(t.shape()));
  }
}

template <typename T>
void check_bias(const char* op, const BasicTensor<T>& bias, std::size_t channels) {
  if (!bias.defined()) return;
  if (bias.rank() != 1 || bias.dim(0) != channels) {
    throw ShapeError(std::string(op) + ": bias shape " + shape_string(bias.shape()) +
                     " does not match " + std::to_string(channels) +
                     " output channels on axis 0");
  }
}

// Shared forward/backward wiring for conv2d and conv3d.
template <typename T>
BasicTensor<T> conv_op(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                       const BasicTensor<T>& bias, const ConvGeom& g,
                       Shape out_shape, const char* name) {
  std::vector<T> out(shape_numel(out_shape), T(0));
  if (bias.defined()) add_bias(out, bias.data(), g.out_plane());
  conv_forward_raw(g, input.data().data(), weight.data().data(), out.data());

  std::vector<BasicTensor<T>> inputs{input, weight};
  const bool has_bias = bias.defined();
  if (has_bias) inputs.push_back(bias);
  return make_result<T>(
      std::move(out_shape), std::move(out), inputs,
      [g, has_bias](Node<T>& self) {
        auto& x = *self.parents[0];
        auto& w = *self.parents[1];
        if (x.requires_grad) {
          conv_backward_input_raw(g, self.grad.data(), w.data.data(), x.grad.data());
        }
        if (w.requires_grad) {
          conv_backward_weight_raw(g, x.data.data(), self.grad.data(), w.grad.data());
        }
        if (has_bias && self.parents[2]->requires_grad) {
          accumulate_bias_grad<T>(self.grad, self.parents[2]->grad, g.out_plane());
        }
      },
      name);
}

std::size_t conv_out_extent(const char* op, std::size_t axis, std::size_t in,
                            std::size_t k, std::size_t stride, std::size_t pad) {
  if (stride == 0) throw ShapeError(std::string(op) + ": stride must be >= 1");
  if (k % 2 == 0) {
    throw ShapeError(std::string(op) + ": kernel extent on spatial axis " +
                     std::to_string(axis) + " must be odd, got " + std::to_string(k));
  }
  if (in + 2 * pad < k) {
    throw ShapeError(std::string(op) + ": kernel " + std::to_string(k) +
                     " larger than padded input " + std::to_string(in + 2 * pad) +
                     " on spatial axis " + std::to_string(axis));
  }
  return (in + 2 * pad - k) / stride + 1;
}

// Splits a shape around `axis` into (outer, extent, inner).
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis, const char* op) {
  if (axis >= s.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for " + shape_string(s));
  }
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

template <typename T>
void check_same_shape(const char* op, const BasicTensor<T>& a,
                      const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": operand shapes differ (" +
                     shape_string(a.shape()) + " vs " + shape_string(b.shape()) + ")");
  }
}

template <typename T, typename Fwd, typename Bwd>
BasicTensor<T> unary_op(const BasicTensor<T>& a, Fwd fwd, Bwd bwd, const char* name) {
  auto in = a.data();
  std::vector<T> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  return make_result<T>(
      a.shape(), std::move(out), {a},
      [bwd](Node<T>& self) {
        auto& x = *self.parents[0];
        for (std::size_t i = 0; i < x.data.size(); ++i) {
          x.grad[i] += self.grad[i] * bwd(x.data[i], self.data[i]);
        }
      },
      name);
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, std::size_t stride,
                      std::size_t pad) {
  check_rank("conv2d", "input", input, 3);
  check_rank("conv2d", "weight", weight, 4);
  if (weight.dim(1) != input.dim(0)) {
    throw ShapeError(axis_mismatch("conv2d", "input channels (weight axis 1 vs input axis 0)",
                                   0, weight.shape(), input.shape()));
  }
  ConvGeom g;
  g.cin = input.dim(0);
  g.cout = weight.dim(0);
  check_bias("conv2d", bias, g.cout);
  g.k = {1, weight.dim(2), weight.dim(3)};
  g.stride = {1, stride, stride};
  g.pad = {0, pad, pad};
  g.in = {1, input.dim(1), input.dim(2)};
  g.out = {1, conv_out_extent("conv2d", 1, g.in[1], g.k[1], stride, pad),
           conv_out_extent("conv2d", 2, g.in[2], g.k[2], stride, pad)};
  return conv_op(input, weight, bias, g, Shape{g.cout, g.out[1], g.out[2]}, "conv2d");
}

template <typename T>
BasicTensor<T> conv3d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, Extent3 stride, Extent3 pad) {
  check_rank("conv3d", "input", input, 4);
  check_rank("conv3d", "weight", weight, 5);
  if (weight.dim(1) != input.dim(0)) {
    throw ShapeError(axis_mismatch("conv3d", "input channels (weight axis 1 vs input axis 0)",
                                   0, weight.shape(), input.shape()));
  }
  ConvGeom g;
  g.cin = input.dim(0);
  g.cout = weight.dim(0);
  check_bias("conv3d", bias, g.cout);
  g.stride = stride;
  g.pad = pad;
  for (std::size_t ax = 0; ax < 3; ++ax) {
    g.k[ax] = weight.dim(ax + 2);
    g.in[ax] = input.dim(ax + 1);
    g.out[ax] = conv_out_extent("conv3d", ax + 1, g.in[ax], g.k[ax], stride[ax], pad[ax]);
  }
  return conv_op(input, weight, bias, g, Shape{g.cout, g.out[0], g.out[1], g.out[2]},
                 "conv3d");
}

template <typename T>
BasicTensor<T> transposed_conv3d(const BasicTensor<T>& input,
                                 const BasicTensor<T>& weight,
                                 const BasicTensor<T>& bias, Extent3 stride,
                                 Extent3 pad, Extent3 output_padding) {
  check_rank("transposed_conv3d", "input", input, 4);
  check_rank("transposed_conv3d", "weight", weight, 5);
  if (weight.dim(0) != input.dim(0)) {
    throw ShapeError(axis_mismatch("transposed_conv3d",
                                   "input channels (weight axis 0 vs input axis 0)", 0,
                                   weight.shape(), input.shape()));
  }
  // Geometry of the forward conv whose adjoint this is: its input is our
  // output and vice versa.
  ConvGeom g;
  g.cout = input.dim(0);
  g.cin = weight.dim(1);
  check_bias("transposed_conv3d", bias, g.cin);
  g.stride = stride;
  g.pad = pad;
  for (std::size_t ax = 0; ax < 3; ++ax) {
    if (stride[ax] < 1 || stride[ax] > 2) {
      throw ShapeError("transposed_conv3d: stride on spatial axis " +
                       std::to_string(ax + 1) + " must be 1 or 2");
    }
    if (output_padding[ax] >= stride[ax]) {
      throw ShapeError("transposed_conv3d: output padding must be < stride on axis " +
                       std::to_string(ax + 1));
    }
    g.k[ax] = weight.dim(ax + 2);
    g.out[ax] = input.dim(ax + 1);
    const std::size_t full = stride[ax] * (g.out[ax] - 1) + g.k[ax] + output_padding[ax];
    if (full <= 2 * pad[ax]) {
      throw ShapeError("transposed_conv3d: padding consumes the output on axis " +
                       std::to_string(ax + 1));
    }
    g.in[ax] = full - 2 * pad[ax];
  }
  Shape out_shape{g.cin, g.in[0], g.in[1], g.in[2]};
  std::vector<T> out(shape_numel(out_shape), T(0));
  if (bias.defined()) add_bias(out, bias.data(), g.in_plane());
  conv_backward_input_raw(g, input.data().data(), weight.data().data(), out.data());

  std::vector<BasicTensor<T>> inputs{input, weight};
  const bool has_bias = bias.defined();
  if (has_bias) inputs.push_back(bias);
  return make_result<T>(
      std::move(out_shape), std::move(out), inputs,
      [g, has_bias](Node<T>& self) {
        auto& x = *self.parents[0];
        auto& w = *self.parents[1];
        if (x.requires_grad) {
          conv_forward_raw(g, self.grad.data(), w.data.data(), x.grad.data());
        }
        if (w.requires_grad) {
          conv_backward_weight_raw(g, self.grad.data(), x.data.data(), w.grad.data());
        }
        if (has_bias && self.parents[2]->requires_grad) {
          accumulate_bias_grad<T>(self.grad, self.parents[2]->grad, g.in_plane());
        }
      },
      "transposed_conv3d");
}

template <typename T>
BasicTensor<T> instance_norm(const BasicTensor<T>& input, const BasicTensor<T>& gamma,
                             const BasicTensor<T>& beta, double eps) {
  if (input.rank() < 2) {
    throw ShapeError("instance_norm: input needs a channel axis and at least one "
                     "spatial axis, got " + shape_string(input.shape()));
  }
  const std::size_t channels = input.dim(0);
  if (gamma.shape() != Shape{channels} || beta.shape() != Shape{channels}) {
    throw ShapeError("instance_norm: gamma/beta must be [" + std::to_string(channels) +
                     "] to match input axis 0, got " + shape_string(gamma.shape()) +
                     " and " + shape_string(beta.shape()));
  }
  const std::size_t n = input.numel() / channels;
  auto x = input.data();
  auto gm = gamma.data();
  auto bt = beta.data();
  std::vector<T> out(x.size());
  std::vector<T> xhat(x.size());
  std::vector<double> inv_std(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    const T* xc = x.data() + c * n;
    double mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) mu += xc[i];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = xc[i] - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    inv_std[c] = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < n; ++i) {
      const double h = (xc[i] - mu) * inv_std[c];
      xhat[c * n + i] = static_cast<T>(h);
      out[c * n + i] = static_cast<T>(h * gm[c] + bt[c]);
    }
  }
  return make_result<T>(
      input.shape(), std::move(out), {input, gamma, beta},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), channels, n](Node<T>& self) {
        auto& x_node = *self.parents[0];
        auto& g_node = *self.parents[1];
        auto& b_node = *self.parents[2];
        for (std::size_t c = 0; c < channels; ++c) {
          const T* dy = self.grad.data() + c * n;
          const T* xh = xhat.data() + c * n;
          double sum_dy = 0.0;
          double sum_dy_xh = 0.0;
          for (std::size_t i = 0; i < n; ++i) {
            sum_dy += dy[i];
            sum_dy_xh += static_cast<double>(dy[i]) * xh[i];
          }
          if (g_node.requires_grad) g_node.grad[c] += static_cast<T>(sum_dy_xh);
          if (b_node.requires_grad) b_node.grad[c] += static_cast<T>(sum_dy);
          if (x_node.requires_grad) {
            const double k = g_node.data[c] * inv_std[c] / static_cast<double>(n);
            T* dx = x_node.grad.data() + c * n;
            for (std::size_t i = 0; i < n; ++i) {
              dx[i] += static_cast<T>(
                  k * (static_cast<double>(n) * dy[i] - sum_dy - xh[i] * sum_dy_xh));
            }
          }
        }
      },
      "instance_norm");
}

template <typename T>
BasicTensor<T> leaky_relu(const BasicTensor<T>& input, double slope) {
  const T s = static_cast<T>(slope);
  return unary_op(
      input, [s](T v) { return v > T(0) ? v : s * v; },
      [s](T x, T) { return x > T(0) ? T(1) : s; }, "leaky_relu");
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& input, std::size_t axis) {
  const auto sp = split_at(input.shape(), axis, "softmax");
  auto x = input.data();
  std::vector<T> out(x.size());
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.extent * sp.inner + i;
      T mx = x[base];
      for (std::size_t k = 1; k < sp.extent; ++k) mx = std::max(mx, x[base + k * sp.inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < sp.extent; ++k) {
        z += std::exp(static_cast<double>(x[base + k * sp.inner]) - mx);
      }
      for (std::size_t k = 0; k < sp.extent; ++k) {
        out[base + k * sp.inner] =
            static_cast<T>(std::exp(static_cast<double>(x[base + k * sp.inner]) - mx) / z);
      }
    }
  }
  return make_result<T>(
      input.shape(), std::move(out), {input},
      [sp](Node<T>& self) {
        auto& xn = *self.parents[0];
        for (std::size_t o = 0; o < sp.outer; ++o) {
          for (std::size_t i = 0; i < sp.inner; ++i) {
            const std::size_t base = o * sp.extent * sp.inner + i;
            double dot = 0.0;
            for (std::size_t k = 0; k < sp.extent; ++k) {
              const std::size_t j = base + k * sp.inner;
              dot += static_cast<double>(self.grad[j]) * self.data[j];
            }
            for (std::size_t k = 0; k < sp.extent; ++k) {
              const std::size_t j = base + k * sp.inner;
              xn.grad[j] += static_cast<T>(self.data[j] * (self.grad[j] - dot));
            }
          }
        }
      },
      "softmax");
}

template <typename T>
BasicTensor<T> log_softmax(const BasicTensor<T>& input, std::size_t axis) {
  const auto sp = split_at(input.shape(), axis, "log_softmax");
  auto x = input.data();
  std::vector<T> out(x.size());
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.extent * sp.inner + i;
      T mx = x[base];
      for (std::size_t k = 1; k < sp.extent; ++k) mx = std::max(mx, x[base + k * sp.inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < sp.extent; ++k) {
        z += std::exp(static_cast<double>(x[base + k * sp.inner]) - mx);
      }
      const double lse = mx + std::log(z);
      for (std::size_t k = 0; k < sp.extent; ++k) {
        out[base + k * sp.inner] = static_cast<T>(x[base + k * sp.inner] - lse);
      }
    }
  }
  return make_result<T>(
      input.shape(), std::move(out), {input},
      [sp](Node<T>& self) {
        auto& xn = *self.parents[0];
        for (std::size_t o = 0; o < sp.outer; ++o) {
          for (std::size_t i = 0; i < sp.inner; ++i) {
            const std::size_t base = o * sp.extent * sp.inner + i;
            double total = 0.0;
            for (std::size_t k = 0; k < sp.extent; ++k) total += self.grad[base + k * sp.inner];
            for (std::size_t k = 0; k < sp.extent; ++k) {
              const std::size_t j = base + k * sp.inner;
              xn.grad[j] += static_cast<T>(self.grad[j] -
                                           std::exp(static_cast<double>(self.data[j])) * total);
            }
          }
        }
      },
      "log_softmax");
}

template <typename T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& inputs, std::size_t axis) {
  if (inputs.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = inputs.front().shape();
  if (axis >= first.size()) {
    throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " +
                     shape_string(first));
  }
  std::vector<std::size_t> extents;
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& t : inputs) {
    const Shape& s = t.shape();
    if (s.size() != first.size()) {
      throw ShapeError("concat: rank mismatch (" + shape_string(first) + " vs " +
                       shape_string(s) + ")");
    }
    for (std::size_t ax = 0; ax < s.size(); ++ax) {
      if (ax != axis && s[ax] != first[ax]) {
        throw ShapeError(axis_mismatch("concat", "extent", ax, first, s));
      }
    }
    extents.push_back(s[axis]);
    out_shape[axis] += s[axis];
  }
  const auto sp = split_at(out_shape, axis, "concat");
  std::vector<T> out(shape_numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    auto src = inputs[t].data();
    const std::size_t chunk = extents[t] * sp.inner;
    for (std::size_t o = 0; o < sp.outer; ++o) {
      std::copy_n(src.data() + o * chunk, chunk,
                  out.data() + o * sp.extent * sp.inner + offset * sp.inner);
    }
    offset += extents[t];
  }
  return make_result<T>(
      std::move(out_shape), std::move(out), inputs,
      [sp, extents](Node<T>& self) {
        std::size_t offset = 0;
        for (std::size_t t = 0; t < extents.size(); ++t) {
          auto& p = *self.parents[t];
          const std::size_t chunk = extents[t] * sp.inner;
          if (p.requires_grad) {
            for (std::size_t o = 0; o < sp.outer; ++o) {
              const T* src = self.grad.data() + o * sp.extent * sp.inner + offset * sp.inner;
              T* dst = p.grad.data() + o * chunk;
              for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
            }
          }
          offset += extents[t];
        }
      },
      "concat");
}

template <typename T>
BasicTensor<T> stack(const std::vector<BasicTensor<T>>& inputs, std::size_t axis) {
  if (inputs.empty()) throw ShapeError("stack: no inputs");
  std::vector<BasicTensor<T>> expanded;
  expanded.reserve(inputs.size());
  for (const auto& t : inputs) {
    Shape s = t.shape();
    if (axis > s.size()) {
      throw ShapeError("stack: axis " + std::to_string(axis) + " out of range for " +
                       shape_string(s));
    }
    s.insert(s.begin() + static_cast<long>(axis), 1);
    expanded.push_back(reshape(t, s));
  }
  return concat(expanded, axis);
}

template <typename T>
BasicTensor<T> slice(const BasicTensor<T>& input, std::size_t axis, std::size_t start,
                     std::size_t length) {
  const auto sp = split_at(input.shape(), axis, "slice");
  if (length == 0 || start + length > sp.extent) {
    throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                     std::to_string(start + length) + ") exceeds extent " +
                     std::to_string(sp.extent) + " on axis " + std::to_string(axis));
  }
  Shape out_shape = input.shape();
  out_shape[axis] = length;
  auto src = input.data();
  std::vector<T> out(shape_numel(out_shape));
  const std::size_t chunk = length * sp.inner;
  for (std::size_t o = 0; o < sp.outer; ++o) {
    std::copy_n(src.data() + o * sp.extent * sp.inner + start * sp.inner, chunk,
                out.data() + o * chunk);
  }
  return make_result<T>(
      std::move(out_shape), std::move(out), {input},
      [sp, start, chunk](Node<T>& self) {
        auto& p = *self.parents[0];
        for (std::size_t o = 0; o < sp.outer; ++o) {
          T* dst = p.grad.data() + o * sp.extent * sp.inner + start * sp.inner;
          const T* g = self.grad.data() + o * chunk;
          for (std::size_t i = 0; i < chunk; ++i) dst[i] += g[i];
        }
      },
      "slice");
}

template <typename T>
BasicTensor<T> shift_right(const BasicTensor<T>& input, std::size_t amount) {
  if (input.rank() == 0) throw ShapeError("shift_right: scalar input");
  const std::size_t width = input.shape().back();
  const std::size_t rows = input.numel() / width;
  auto src = input.data();
  std::vector<T> out(src.size(), T(0));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t x = amount; x < width; ++x) {
      out[r * width + x] = src[r * width + x - amount];
    }
  }
  return make_result<T>(
      input.shape(), std::move(out), {input},
      [rows, width, amount](Node<T>& self) {
        auto& p = *self.parents[0];
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t x = amount; x < width; ++x) {
            p.grad[r * width + x - amount] += self.grad[r * width + x];
          }
        }
      },
      "shift_right");
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& input, Shape shape) {
  if (shape_numel(shape) != input.numel()) {
    throw ShapeError("reshape: " + shape_string(input.shape()) + " cannot become " +
                     shape_string(shape));
  }
  return make_result<T>(
      std::move(shape), input.to_vector(), {input},
      [](Node<T>& self) {
        auto& p = *self.parents[0];
        for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += self.grad[i];
      },
      "reshape");
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  check_same_shape("add", a, b);
  auto x = a.data();
  auto y = b.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return make_result<T>(
      a.shape(), std::move(out), {a, b},
      [](Node<T>& self) {
        for (int k = 0; k < 2; ++k) {
          auto& p = *self.parents[k];
          if (!p.requires_grad) continue;
          for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += self.grad[i];
        }
      },
      "add");
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  check_same_shape("sub", a, b);
  auto x = a.data();
  auto y = b.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  return make_result<T>(
      a.shape(), std::move(out), {a, b},
      [](Node<T>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          if (pa.requires_grad) pa.grad[i] += self.grad[i];
          if (pb.requires_grad) pb.grad[i] -= self.grad[i];
        }
      },
      "sub");
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  check_same_shape("mul", a, b);
  auto x = a.data();
  auto y = b.data();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return make_result<T>(
      a.shape(), std::move(out), {a, b},
      [](Node<T>& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          if (pa.requires_grad) pa.grad[i] += self.grad[i] * pb.data[i];
          if (pb.requires_grad) pb.grad[i] += self.grad[i] * pa.data[i];
        }
      },
      "mul");
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, double factor) {
  const T f = static_cast<T>(factor);
  return unary_op(a, [f](T v) { return v * f; }, [f](T, T) { return f; }, "scale");
}

template <typename T>
BasicTensor<T> neg(const BasicTensor<T>& a) {
  return scale(a, -1.0);
}

template <typename T>
BasicTensor<T> abs(const BasicTensor<T>& a) {
  return unary_op(
      a, [](T v) { return std::abs(v); },
      [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); }, "abs");
}

template <typename T>
BasicTensor<T> log(const BasicTensor<T>& a) {
  return unary_op(
      a, [](T v) { return std::log(v); }, [](T x, T) { return T(1) / x; }, "log");
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& a) {
  double acc = 0.0;
  for (auto v : a.data()) acc += v;
  return make_result<T>(
      Shape{}, std::vector<T>{static_cast<T>(acc)}, {a},
      [](Node<T>& self) {
        auto& p = *self.parents[0];
        for (auto& g : p.grad) g += self.grad[0];
      },
      "sum");
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

template <typename T>
BasicTensor<T> sum_axis(const BasicTensor<T>& a, std::size_t axis) {
  const auto sp = split_at(a.shape(), axis, "sum_axis");
  Shape out_shape = a.shape();
  out_shape.erase(out_shape.begin() + static_cast<long>(axis));
  auto x = a.data();
  std::vector<T> out(sp.outer * sp.inner);
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      double acc = 0.0;
      for (std::size_t k = 0; k < sp.extent; ++k) acc += x[(o * sp.extent + k) * sp.inner + i];
      out[o * sp.inner + i] = static_cast<T>(acc);
    }
  }
  return make_result<T>(
      std::move(out_shape), std::move(out), {a},
      [sp](Node<T>& self) {
        auto& p = *self.parents[0];
        for (std::size_t o = 0; o < sp.outer; ++o)
          for (std::size_t k = 0; k < sp.extent; ++k)
            for (std::size_t i = 0; i < sp.inner; ++i)
              p.grad[(o * sp.extent + k) * sp.inner + i] += self.grad[o * sp.inner + i];
      },
      "sum_axis");
}

#define PDS_INSTANTIATE_OPS(T)                                                        \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&,        \
                                 const BasicTensor<T>&, std::size_t, std::size_t);    \
  template BasicTensor<T> conv3d(const BasicTensor<T>&, const BasicTensor<T>&,        \
                                 const BasicTensor<T>&, Extent3, Extent3);            \
  template BasicTensor<T> transposed_conv3d(const BasicTensor<T>&,                    \
                                            const BasicTensor<T>&,                    \
                                            const BasicTensor<T>&, Extent3, Extent3,  \
                                            Extent3);                                 \
  template BasicTensor<T> instance_norm(const BasicTensor<T>&, const BasicTensor<T>&, \
                                        const BasicTensor<T>&, double);               \
  template BasicTensor<T> leaky_relu(const BasicTensor<T>&, double);                  \
  template BasicTensor<T> softmax(const BasicTensor<T>&, std::size_t);                \
  template BasicTensor<T> log_softmax(const BasicTensor<T>&, std::size_t);            \
  template BasicTensor<T> concat(const std::vector<BasicTensor<T>>&, std::size_t);    \
  template BasicTensor<T> stack(const std::vector<BasicTensor<T>>&, std::size_t);     \
  template BasicTensor<T> slice(const BasicTensor<T>&, std::size_t, std::size_t,      \
                                std::size_t);                                         \
  template BasicTensor<T> shift_right(const BasicTensor<T>&, std::size_t);            \
  template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                      \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);          \
  template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);          \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);          \
  template BasicTensor<T> scale(const BasicTensor<T>&, double);                       \
  template BasicTensor<T> neg(const BasicTensor<T>&);                                 \
  template BasicTensor<T> abs(const BasicTensor<T>&);                                 \
  template BasicTensor<T> log(const BasicTensor<T>&);                                 \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                 \
  template BasicTensor<T> mean(const BasicTensor<T>&);                                \
  template BasicTensor<T> sum_axis(const BasicTensor<T>&, std::size_t);

PDS_INSTANTIATE_OPS(float)
PDS_INSTANTIATE_OPS(double)

#undef PDS_INSTANTIATE_OPS

}  // namespace pds
