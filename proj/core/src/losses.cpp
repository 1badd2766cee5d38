#include "pds/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "pds/ops.hpp"

namespace pds {

LaplaceTarget laplace_target(double d_gt, std::span<const double> grid, double b) {
  if (!(b > 0.0)) throw std::invalid_argument("laplace_target: b must be > 0");
  if (grid.empty()) throw std::invalid_argument("laplace_target: empty grid");
  LaplaceTarget t;
  t.center = d_gt;
  t.diversity = b;
  t.probs.resize(grid.size());
  // Shifting every exponent by the smallest distance leaves the normalized
  // result unchanged and keeps the largest term at exp(0).
  double nearest = std::abs(grid[0] - d_gt);
  for (double g : grid) nearest = std::min(nearest, std::abs(g - d_gt));
  double norm = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    t.probs[i] = std::exp(-(std::abs(grid[i] - d_gt) - nearest) / b);
    norm += t.probs[i];
  }
  for (auto& p : t.probs) p /= norm;
  return t;
}

LaplaceTarget laplace_target(double d_gt, std::size_t slices, double step, double b) {
  std::vector<double> grid(slices);
  for (std::size_t k = 0; k < slices; ++k) grid[k] = static_cast<double>(k) * step;
  return laplace_target(d_gt, grid, b);
}

double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

const char* to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kSubpixelCrossEntropy:
      return "subpixel_ce";
    case LossKind::kL1SoftArgmin:
      return "l1_softargmin";
  }
  return "unknown";
}

LossKind loss_from_string(const std::string& name) {
  if (name == "subpixel_ce") return LossKind::kSubpixelCrossEntropy;
  if (name == "l1_softargmin" || name == "l1") return LossKind::kL1SoftArgmin;
  throw std::invalid_argument("unknown loss '" + name +
                              "' (expected subpixel_ce or l1_softargmin)");
}

template <typename T>
ValidityMask loss_mask(const BasicPosteriorTensor<T>& posterior, const DisparityMap& gt,
                       const ValidityMask& mask) {
  const std::size_t h = posterior.height(), w = posterior.width();
  if (!gt.same_extent(h, w) || !mask.same_extent(h, w)) {
    throw ShapeError("loss: ground truth " + std::to_string(gt.height) + "x" +
                     std::to_string(gt.width) + " does not match posterior " +
                     std::to_string(h) + "x" + std::to_string(w));
  }
  const double top = posterior.grid_value(posterior.slices() - 1);
  ValidityMask out(h, w, std::uint8_t{0});
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double d = gt.values[i];
    out.values[i] = mask.values[i] && std::isfinite(d) && d >= 0.0 && d <= top;
  }
  return out;
}

template <typename T>
LossValue<T> subpixel_cross_entropy(const BasicPosteriorTensor<T>& posterior,
                                    const DisparityMap& gt, const ValidityMask& mask,
                                    double b) {
  const auto valid = loss_mask(posterior, gt, mask);
  const std::size_t count = count_valid(valid);
  if (count == 0) throw std::invalid_argument("subpixel_cross_entropy: all pixels masked");
  const std::size_t slices = posterior.slices();
  const std::size_t plane = valid.size();
  std::vector<double> grid(slices);
  for (std::size_t k = 0; k < slices; ++k) grid[k] = posterior.grid_value(k);

  std::vector<T> target(slices * plane, T(0));
  for (std::size_t i = 0; i < plane; ++i) {
    if (!valid.values[i]) continue;
    const auto q = laplace_target(gt.values[i], grid, b);
    for (std::size_t k = 0; k < slices; ++k) target[k * plane + i] = static_cast<T>(q.probs[k]);
  }
  auto q = BasicTensor<T>::from(posterior.probs.shape(), std::move(target));
  auto log_p = posterior.log_probs.defined() ? posterior.log_probs : log(posterior.probs);
  auto total = sum(q * log_p);
  return {scale(total, -1.0 / static_cast<double>(count)), count};
}

template <typename T>
LossValue<T> l1_softargmin_loss(const BasicPosteriorTensor<T>& posterior,
                                const DisparityMap& gt, const ValidityMask& mask) {
  const auto valid = loss_mask(posterior, gt, mask);
  const std::size_t count = count_valid(valid);
  if (count == 0) throw std::invalid_argument("l1_softargmin_loss: all pixels masked");
  const Shape plane_shape{posterior.height(), posterior.width()};
  std::vector<T> gt_values(valid.size(), T(0));
  std::vector<T> weights(valid.size(), T(0));
  for (std::size_t i = 0; i < valid.size(); ++i) {
    if (!valid.values[i]) continue;
    gt_values[i] = static_cast<T>(gt.values[i]);
    weights[i] = T(1);
  }
  auto predicted = expected_disparity(posterior);
  auto residual = abs(predicted - BasicTensor<T>::from(plane_shape, std::move(gt_values)));
  auto total = sum(residual * BasicTensor<T>::from(plane_shape, std::move(weights)));
  return {scale(total, 1.0 / static_cast<double>(count)), count};
}

template <typename T>
LossValue<T> compute_loss(LossKind kind, const BasicPosteriorTensor<T>& posterior,
                          const DisparityMap& gt, const ValidityMask& mask, double b) {
  switch (kind) {
    case LossKind::kSubpixelCrossEntropy:
      return subpixel_cross_entropy(posterior, gt, mask, b);
    case LossKind::kL1SoftArgmin:
      return l1_softargmin_loss(posterior, gt, mask);
  }
  throw std::invalid_argument("unknown loss kind");
}

#define PDS_INSTANTIATE_LOSSES(T)                                                          \
  template ValidityMask loss_mask(const BasicPosteriorTensor<T>&, const DisparityMap&,     \
                                  const ValidityMask&);                                    \
  template LossValue<T> subpixel_cross_entropy(const BasicPosteriorTensor<T>&,             \
                                               const DisparityMap&, const ValidityMask&,   \
                                               double);                                    \
  template LossValue<T> l1_softargmin_loss(const BasicPosteriorTensor<T>&,                 \
                                           const DisparityMap&, const ValidityMask&);      \
  template LossValue<T> compute_loss(LossKind, const BasicPosteriorTensor<T>&,             \
                                     const DisparityMap&, const ValidityMask&, double);

PDS_INSTANTIATE_LOSSES(float)
PDS_INSTANTIATE_LOSSES(double)

#undef PDS_INSTANTIATE_LOSSES

}  // namespace pds
