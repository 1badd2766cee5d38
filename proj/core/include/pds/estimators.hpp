#pragma once

#include "pds/map2d.hpp"
#include "pds/model.hpp"
#include "pds/tensor.hpp"

namespace pds {

/// Per-pixel distribution over disparities, [D', H, W]. Slice k stands for
/// disparity k * grid_step. `log_probs` is present when the posterior was
/// derived from costs; losses use it for a stable log.
template <typename T>
struct BasicPosteriorTensor {
  BasicTensor<T> probs;
  BasicTensor<T> log_probs;
  double grid_step = BasicCostTensor<T>::kDisparityStep;

  std::size_t slices() const { return probs.dim(0); }
  std::size_t height() const { return probs.dim(1); }
  std::size_t width() const { return probs.dim(2); }
  double grid_value(std::size_t k) const { return static_cast<double>(k) * grid_step; }
};

using PosteriorTensor = BasicPosteriorTensor<float>;

enum class EstimatorKind { kSoftArgmin, kSubpixelMap };

const char* to_string(EstimatorKind kind);
EstimatorKind estimator_from_string(const std::string& name);

/// softmax(-C) along the disparity axis. Throws NumericError on NaN costs.
template <typename T>
BasicPosteriorTensor<T> cost_to_posterior(const BasicCostTensor<T>& costs);

/// Wraps an explicit [D', H, W] distribution (test fixtures, tools).
/// Checks nonnegativity and per-pixel sums within `tolerance`.
template <typename T>
BasicPosteriorTensor<T> posterior_from_probabilities(const BasicTensor<T>& probs,
                                                     double grid_step,
                                                     double tolerance = 1e-5);

/// Posterior mean: sum_k grid(k) * P(k).
template <typename T>
DisparityMap soft_argmin(const BasicPosteriorTensor<T>& posterior);

/// Graph-connected posterior mean, [H, W].
template <typename T>
BasicTensor<T> expected_disparity(const BasicPosteriorTensor<T>& posterior);

/// Mean of the posterior restricted to |d - argmax| <= delta and
/// renormalized by the mass inside that window. Ties in the argmax go to the
/// lowest disparity; delta is in full-resolution pixels.
template <typename T>
DisparityMap subpixel_map(const BasicPosteriorTensor<T>& posterior, double delta);

/// Index of the most probable slice at each pixel (lowest index on ties).
template <typename T>
Map2D<std::size_t> argmax_slices(const BasicPosteriorTensor<T>& posterior);

struct EstimatorSettings {
  EstimatorKind kind = EstimatorKind::kSubpixelMap;
  double delta = 4.0;
  int d_run = 0;  // 0: the network's configured max disparity
};

template <typename T>
DisparityMap estimate(const BasicPosteriorTensor<T>& posterior,
                      const EstimatorSettings& settings);

/// forward -> posterior -> estimator. Inputs are [3, H, W], H and W
/// multiples of 4, already normalized.
DisparityMap infer_disparity(const PdsNetwork& net, const Tensor& left, const Tensor& right,
                             const EstimatorSettings& settings);

}  // namespace pds
