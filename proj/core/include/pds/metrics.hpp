#pragma once

#include <limits>
#include <string>
#include <vector>

#include "pds/data_io.hpp"
#include "pds/estimators.hpp"
#include "pds/map2d.hpp"

namespace pds {

/// Percentage of valid pixels with |pred - gt| > 3 (strict).
/// Throws std::invalid_argument on an empty mask.
double three_pixel_error(const DisparityMap& pred, const DisparityMap& gt,
                         const ValidityMask& mask);

/// Mean |pred - gt| over valid pixels. Throws on an empty mask.
double mean_absolute_error(const DisparityMap& pred, const DisparityMap& gt,
                           const ValidityMask& mask);

/// mask AND gt < max_eval_disp.
ValidityMask apply_protocol_mask(const DisparityMap& gt, const ValidityMask& mask,
                                 double max_eval_disp);

struct SampleMetrics {
  std::string name;
  std::size_t pixels = 0;
  std::size_t bad_pixels = 0;  // |error| > 3
  double abs_error_sum = 0.0;

  double three_pixel_error() const;
  double mean_absolute_error() const;
};

SampleMetrics measure(const std::string& name, const DisparityMap& pred,
                      const DisparityMap& gt, const ValidityMask& mask);

struct EvalResult {
  double three_pixel_error = 0.0;    // percent
  double mean_absolute_error = 0.0;  // pixels
  std::size_t pixels = 0;
  std::vector<SampleMetrics> per_sample;

  /// `sample,3pe,mae,pixels` rows plus a final TOTAL row.
  std::string to_csv() const;
};

/// Pixel-weighted pooling of per-sample counts. Throws if no pixel was evaluated.
EvalResult aggregate(std::vector<SampleMetrics> per_sample);

struct EvalSettings {
  EstimatorSettings estimator;
  double max_eval_disp = std::numeric_limits<double>::infinity();
};

/// Normalizes and pads each raw sample, runs inference and pools metrics.
EvalResult evaluate(const std::vector<StereoSample>& samples, const PdsNetwork& net,
                    const EvalSettings& settings);

/// Disparity prediction for one raw ([0, 1]) sample at its own extents.
DisparityMap predict(const StereoSample& sample, const PdsNetwork& net,
                     const EstimatorSettings& settings);

}  // namespace pds
