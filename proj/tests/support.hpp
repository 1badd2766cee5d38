#pragma once

// Reference implementations and checks shared by the unit tests and the
// acceptance runner. Everything here is deliberately naive.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pds/tensor.hpp"

namespace pds::oracle {

template <typename T>
BasicTensor<T> random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0,
                             double hi = 1.0, bool requires_grad = false) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(dist(rng));
  return BasicTensor<T>::from(shape, std::move(v), requires_grad);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

struct GradCheck {
  std::size_t checked = 0;
  std::size_t failures = 0;
  std::size_t refined = 0;  // entries re-measured at the fine step
  double worst_ratio = 0.0;  // error over tolerance at the worst entry; <= 1 passes
  double worst_abs = 0.0;
  double worst_rel = 0.0;
  std::string worst_where;
  bool ok() const { return checked > 0 && failures == 0; }
};

inline bool grad_close(double analytic, double numeric, double abs_tol = 1e-4,
                       double rel_tol = 2e-2) {
  const double err = std::abs(analytic - numeric);
  return err <= std::max(abs_tol, rel_tol * std::max(std::abs(analytic), std::abs(numeric)));
}

/// Central differences for every entry of every leaf. `loss` rebuilds the
/// graph from the current leaf values and returns a scalar. An entry that
/// disagrees at step h is measured again at `fine_h`: at h a perturbation can
/// carry many activations across a leaky-relu kink. The tolerance is the same
/// at both steps, so a wrong gradient fails either way.
inline GradCheck check_gradients(std::vector<Tensor64*> leaves,
                                 const std::function<Tensor64()>& loss,
                                 const std::vector<std::string>& names = {},
                                 double h = 1e-3, std::size_t max_entries_per_leaf = 0,
                                 double fine_h = 1e-6) {
  for (auto* leaf : leaves) {
    leaf->set_requires_grad(true);
    leaf->zero_grad();
  }
  loss().backward();
  GradCheck out;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto& leaf = *leaves[li];
    const std::vector<double> analytic(leaf.grad().begin(), leaf.grad().end());
    auto data = leaf.mutable_data();
    const std::size_t n = data.size();
    const std::size_t stride =
        max_entries_per_leaf && n > max_entries_per_leaf ? n / max_entries_per_leaf : 1;
    for (std::size_t i = 0; i < n; i += stride) {
      const double orig = data[i];
      auto measure = [&](double step) {
        data[i] = orig + step;
        const double up = loss().item();
        data[i] = orig - step;
        const double down = loss().item();
        data[i] = orig;
        return (up - down) / (2 * step);
      };
      double numeric = measure(h);
      if (!grad_close(analytic[i], numeric)) {
        numeric = measure(fine_h);
        ++out.refined;
      }
      ++out.checked;
      const double err = std::abs(analytic[i] - numeric);
      const double scale = std::max(std::abs(analytic[i]), std::abs(numeric));
      const double ratio = err / std::max(1e-4, 2e-2 * scale);
      if (!grad_close(analytic[i], numeric)) ++out.failures;
      if (ratio > out.worst_ratio) {
        out.worst_ratio = ratio;
        out.worst_abs = err;
        out.worst_rel = scale > 0 ? err / scale : 0.0;
        out.worst_where = (li < names.size() ? names[li] : "leaf" + std::to_string(li)) + "[" +
                          std::to_string(i) + "] analytic=" + std::to_string(analytic[i]) +
                          " numeric=" + std::to_string(numeric);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Direct-loop convolution references on flat arrays.

struct Geometry3 {
  std::size_t c, d, h, w;
};

/// Cross-correlation, weight [K, C, kd, kh, kw], per-axis stride and pad.
inline std::vector<double> naive_conv3d(const std::vector<double>& x, Geometry3 in,
                                        const std::vector<double>& wt, std::size_t k,
                                        std::size_t kd, std::size_t kh, std::size_t kw,
                                        const std::vector<double>& bias,
                                        std::array<std::size_t, 3> s,
                                        std::array<std::size_t, 3> p, Geometry3& out) {
  out = {k, (in.d + 2 * p[0] - kd) / s[0] + 1, (in.h + 2 * p[1] - kh) / s[1] + 1,
         (in.w + 2 * p[2] - kw) / s[2] + 1};
  std::vector<double> y(out.c * out.d * out.h * out.w);
  for (std::size_t o = 0; o < out.c; ++o)
    for (std::size_t z = 0; z < out.d; ++z)
      for (std::size_t r = 0; r < out.h; ++r)
        for (std::size_t q = 0; q < out.w; ++q) {
          double acc = bias.empty() ? 0.0 : bias[o];
          for (std::size_t ci = 0; ci < in.c; ++ci)
            for (std::size_t a = 0; a < kd; ++a)
              for (std::size_t b = 0; b < kh; ++b)
                for (std::size_t e = 0; e < kw; ++e) {
                  const long zz = static_cast<long>(z * s[0] + a) - static_cast<long>(p[0]);
                  const long rr = static_cast<long>(r * s[1] + b) - static_cast<long>(p[1]);
                  const long qq = static_cast<long>(q * s[2] + e) - static_cast<long>(p[2]);
                  if (zz < 0 || rr < 0 || qq < 0 || zz >= static_cast<long>(in.d) ||
                      rr >= static_cast<long>(in.h) || qq >= static_cast<long>(in.w))
                    continue;
                  acc += x[((ci * in.d + zz) * in.h + rr) * in.w + qq] *
                         wt[((((o * in.c + ci) * kd + a) * kh + b) * kw + e)];
                }
          y[((o * out.d + z) * out.h + r) * out.w + q] = acc;
        }
  return y;
}

/// Transposed convolution by scattering every input value through the
/// kernel, weight [Cin, Cout, kd, kh, kw].
inline std::vector<double> scatter_transposed_conv3d(
    const std::vector<double>& x, Geometry3 in, const std::vector<double>& wt,
    std::size_t cout, std::size_t kd, std::size_t kh, std::size_t kw,
    const std::vector<double>& bias, std::array<std::size_t, 3> s,
    std::array<std::size_t, 3> p, std::array<std::size_t, 3> op, Geometry3& out) {
  out = {cout, s[0] * (in.d - 1) + kd - 2 * p[0] + op[0], s[1] * (in.h - 1) + kh - 2 * p[1] + op[1],
         s[2] * (in.w - 1) + kw - 2 * p[2] + op[2]};
  std::vector<double> y(out.c * out.d * out.h * out.w, 0.0);
  for (std::size_t ci = 0; ci < in.c; ++ci)
    for (std::size_t z = 0; z < in.d; ++z)
      for (std::size_t r = 0; r < in.h; ++r)
        for (std::size_t q = 0; q < in.w; ++q) {
          const double v = x[((ci * in.d + z) * in.h + r) * in.w + q];
          for (std::size_t o = 0; o < cout; ++o)
            for (std::size_t a = 0; a < kd; ++a)
              for (std::size_t b = 0; b < kh; ++b)
                for (std::size_t e = 0; e < kw; ++e) {
                  const long zz = static_cast<long>(z * s[0] + a) - static_cast<long>(p[0]);
                  const long rr = static_cast<long>(r * s[1] + b) - static_cast<long>(p[1]);
                  const long qq = static_cast<long>(q * s[2] + e) - static_cast<long>(p[2]);
                  if (zz < 0 || rr < 0 || qq < 0 || zz >= static_cast<long>(out.d) ||
                      rr >= static_cast<long>(out.h) || qq >= static_cast<long>(out.w))
                    continue;
                  y[((o * out.d + zz) * out.h + rr) * out.w + qq] +=
                      v * wt[((((ci * cout + o) * kd + a) * kh + b) * kw + e)];
                }
        }
  if (!bias.empty()) {
    const std::size_t plane = out.d * out.h * out.w;
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t i = 0; i < plane; ++i) y[o * plane + i] += bias[o];
  }
  return y;
}

// ---------------------------------------------------------------------------
// Estimator references: plain loops over one pixel's distribution.

inline double expectation(const std::vector<double>& probs, double step) {
  double s = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) s += k * step * probs[k];
  return s;
}

/// Scans every slice for the first maximum, then averages grid values whose
/// distance to it is at most delta, weighted and renormalized.
inline double windowed_mean(const std::vector<double>& probs, double step, double delta) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < probs.size(); ++k) {
    if (probs[k] > probs[best]) best = k;
  }
  const double center = best * step;
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    if (std::abs(k * step - center) <= delta + 1e-12) {
      num += k * step * probs[k];
      den += probs[k];
    }
  }
  return num / den;
}

}  // namespace pds::oracle
