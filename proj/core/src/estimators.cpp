#include "pds/estimators.hpp"

#include <cmath>
#include <stdexcept>

#include "pds/ops.hpp"

namespace pds {

const char* to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::kSoftArgmin:
      return "soft_argmin";
    case EstimatorKind::kSubpixelMap:
      return "subpixel_map";
  }
  return "unknown";
}

EstimatorKind estimator_from_string(const std::string& name) {
  if (name == "soft_argmin" || name == "softargmin") return EstimatorKind::kSoftArgmin;
  if (name == "subpixel_map" || name == "map") return EstimatorKind::kSubpixelMap;
  throw std::invalid_argument("unknown estimator '" + name +
                              "' (expected soft_argmin or subpixel_map)");
}

namespace {

template <typename T>
void check_posterior_rank(const BasicTensor<T>& probs) {
  if (probs.rank() != 3) {
    throw ShapeError("posterior must be [D', H, W], got " + shape_string(probs.shape()));
  }
}

}  // namespace

template <typename T>
BasicPosteriorTensor<T> cost_to_posterior(const BasicCostTensor<T>& costs) {
  check_posterior_rank(costs.values);
  for (auto v : costs.values.data()) {
    if (std::isnan(v)) throw NumericError("cost_to_posterior: NaN in cost tensor");
  }
  auto negated = neg(costs.values);
  BasicPosteriorTensor<T> p;
  p.probs = softmax(negated, 0);
  p.log_probs = log_softmax(negated, 0);
  p.grid_step = BasicCostTensor<T>::kDisparityStep;
  return p;
}

template <typename T>
BasicPosteriorTensor<T> posterior_from_probabilities(const BasicTensor<T>& probs,
                                                     double grid_step, double tolerance) {
  check_posterior_rank(probs);
  if (!(grid_step > 0.0)) throw std::invalid_argument("grid_step must be > 0");
  const std::size_t slices = probs.dim(0);
  const std::size_t plane = probs.dim(1) * probs.dim(2);
  auto p = probs.data();
  for (std::size_t i = 0; i < plane; ++i) {
    double total = 0.0;
    for (std::size_t k = 0; k < slices; ++k) {
      const double v = p[k * plane + i];
      if (v < 0.0) throw std::invalid_argument("posterior has a negative entry");
      total += v;
    }
    if (std::abs(total - 1.0) > tolerance) {
      throw std::invalid_argument("posterior at pixel " + std::to_string(i) + " sums to " +
                                  std::to_string(total));
    }
  }
  return {probs, {}, grid_step};
}

template <typename T>
DisparityMap soft_argmin(const BasicPosteriorTensor<T>& posterior) {
  check_posterior_rank(posterior.probs);
  const std::size_t slices = posterior.slices();
  const std::size_t h = posterior.height(), w = posterior.width();
  const std::size_t plane = h * w;
  auto p = posterior.probs.data();
  DisparityMap out(h, w);
  for (std::size_t i = 0; i < plane; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < slices; ++k) acc += posterior.grid_value(k) * p[k * plane + i];
    out.values[i] = static_cast<float>(acc);
  }
  return out;
}

template <typename T>
BasicTensor<T> expected_disparity(const BasicPosteriorTensor<T>& posterior) {
  check_posterior_rank(posterior.probs);
  const std::size_t plane = posterior.height() * posterior.width();
  std::vector<T> grid(posterior.probs.numel());
  for (std::size_t k = 0; k < posterior.slices(); ++k) {
    std::fill_n(grid.begin() + static_cast<long>(k * plane), plane,
                static_cast<T>(posterior.grid_value(k)));
  }
  auto weights = BasicTensor<T>::from(posterior.probs.shape(), std::move(grid));
  return sum_axis(posterior.probs * weights, 0);
}

template <typename T>
Map2D<std::size_t> argmax_slices(const BasicPosteriorTensor<T>& posterior) {
  check_posterior_rank(posterior.probs);
  const std::size_t slices = posterior.slices();
  const std::size_t h = posterior.height(), w = posterior.width();
  const std::size_t plane = h * w;
  auto p = posterior.probs.data();
  Map2D<std::size_t> out(h, w);
  for (std::size_t i = 0; i < plane; ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < slices; ++k) {
      if (p[k * plane + i] > p[best * plane + i]) best = k;
    }
    out.values[i] = best;
  }
  return out;
}

template <typename T>
DisparityMap subpixel_map(const BasicPosteriorTensor<T>& posterior, double delta) {
  if (!(delta > 0.0)) throw std::invalid_argument("subpixel_map: delta must be > 0");
  const auto best = argmax_slices(posterior);
  const std::size_t slices = posterior.slices();
  const std::size_t h = posterior.height(), w = posterior.width();
  const std::size_t plane = h * w;
  // Window half-width in slices; the epsilon keeps delta = n * step inclusive.
  const auto reach = static_cast<std::size_t>(std::floor(delta / posterior.grid_step + 1e-9));
  auto p = posterior.probs.data();
  DisparityMap out(h, w);
  for (std::size_t i = 0; i < plane; ++i) {
    const std::size_t k0 = best.values[i];
    const std::size_t lo = k0 >= reach ? k0 - reach : 0;
    const std::size_t hi = std::min(slices - 1, k0 + reach);
    double mass = 0.0;
    double weighted = 0.0;
    for (std::size_t k = lo; k <= hi; ++k) {
      const double v = p[k * plane + i];
      mass += v;
      weighted += posterior.grid_value(k) * v;
    }
    out.values[i] = static_cast<float>(mass > 0.0 ? weighted / mass : posterior.grid_value(k0));
  }
  return out;
}

template <typename T>
DisparityMap estimate(const BasicPosteriorTensor<T>& posterior,
                      const EstimatorSettings& settings) {
  switch (settings.kind) {
    case EstimatorKind::kSoftArgmin:
      return soft_argmin(posterior);
    case EstimatorKind::kSubpixelMap:
      return subpixel_map(posterior, settings.delta);
  }
  throw std::invalid_argument("unknown estimator kind");
}

DisparityMap infer_disparity(const PdsNetwork& net, const Tensor& left, const Tensor& right,
                             const EstimatorSettings& settings) {
  const auto costs = net.forward(left, right, settings.d_run);
  return estimate(cost_to_posterior(costs), settings);
}

#define PDS_INSTANTIATE_ESTIMATORS(T)                                                      \
  template BasicPosteriorTensor<T> cost_to_posterior(const BasicCostTensor<T>&);           \
  template BasicPosteriorTensor<T> posterior_from_probabilities(const BasicTensor<T>&,     \
                                                                double, double);           \
  template DisparityMap soft_argmin(const BasicPosteriorTensor<T>&);                       \
  template BasicTensor<T> expected_disparity(const BasicPosteriorTensor<T>&);              \
  template Map2D<std::size_t> argmax_slices(const BasicPosteriorTensor<T>&);               \
  template DisparityMap subpixel_map(const BasicPosteriorTensor<T>&, double);              \
  template DisparityMap estimate(const BasicPosteriorTensor<T>&, const EstimatorSettings&);

PDS_INSTANTIATE_ESTIMATORS(float)
PDS_INSTANTIATE_ESTIMATORS(double)

#undef PDS_INSTANTIATE_ESTIMATORS

}  // namespace pds
