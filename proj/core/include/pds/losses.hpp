#pragma once

#include <span>
#include <vector>

#include "pds/estimators.hpp"
#include "pds/map2d.hpp"
#include "pds/tensor.hpp"

namespace pds {

/// Discretized Laplace distribution exp(-|d - center| / b) / N over a grid.
struct LaplaceTarget {
  std::vector<double> probs;
  double center = 0.0;
  double diversity = 2.0;
};

LaplaceTarget laplace_target(double d_gt, std::span<const double> grid, double b);
/// Grid k * step for k = 0 .. slices-1.
LaplaceTarget laplace_target(double d_gt, std::size_t slices, double step, double b);

/// Shannon entropy (nats) of a distribution; 0 log 0 = 0.
double entropy(std::span<const double> probs);

template <typename T>
struct LossValue {
  BasicTensor<T> value;  // scalar, graph-connected
  std::size_t pixels = 0;
};

enum class LossKind { kSubpixelCrossEntropy, kL1SoftArgmin };

const char* to_string(LossKind kind);
LossKind loss_from_string(const std::string& name);

/// Pixels that enter a loss: valid in `mask` with ground truth inside the
/// posterior's grid range [0, (D'-1) * step].
template <typename T>
ValidityMask loss_mask(const BasicPosteriorTensor<T>& posterior, const DisparityMap& gt,
                       const ValidityMask& mask);

/// -(1/|valid|) sum_pixels sum_d Q_gt(d) log P(d). Throws std::invalid_argument
/// when no pixel survives the mask.
template <typename T>
LossValue<T> subpixel_cross_entropy(const BasicPosteriorTensor<T>& posterior,
                                    const DisparityMap& gt, const ValidityMask& mask,
                                    double b = 2.0);

/// (1/|valid|) sum_pixels |soft_argmin(P) - gt|.
template <typename T>
LossValue<T> l1_softargmin_loss(const BasicPosteriorTensor<T>& posterior,
                                const DisparityMap& gt, const ValidityMask& mask);

template <typename T>
LossValue<T> compute_loss(LossKind kind, const BasicPosteriorTensor<T>& posterior,
                          const DisparityMap& gt, const ValidityMask& mask, double b);

}  // namespace pds
