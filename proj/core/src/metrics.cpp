#include "pds/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace pds {

namespace {

void check_extents(const DisparityMap& pred, const DisparityMap& gt, const ValidityMask& mask) {
  if (!pred.same_extent(gt) || !mask.same_extent(gt)) {
    throw std::invalid_argument("prediction, gt and mask extents differ");
  }
}

std::string format_number(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

SampleMetrics measure(const std::string& name, const DisparityMap& pred,
                      const DisparityMap& gt, const ValidityMask& mask) {
  check_extents(pred, gt, mask);
  SampleMetrics m;
  m.name = name;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!mask.values[i]) continue;
    const double err = std::abs(static_cast<double>(pred.values[i]) - gt.values[i]);
    ++m.pixels;
    m.bad_pixels += err > 3.0;
    m.abs_error_sum += err;
  }
  return m;
}

double SampleMetrics::three_pixel_error() const {
  if (pixels == 0) return std::numeric_limits<double>::quiet_NaN();
  return 100.0 * static_cast<double>(bad_pixels) / static_cast<double>(pixels);
}

double SampleMetrics::mean_absolute_error() const {
  if (pixels == 0) return std::numeric_limits<double>::quiet_NaN();
  return abs_error_sum / static_cast<double>(pixels);
}

double three_pixel_error(const DisparityMap& pred, const DisparityMap& gt,
                         const ValidityMask& mask) {
  const auto m = measure("", pred, gt, mask);
  if (m.pixels == 0) throw std::invalid_argument("three_pixel_error: no valid pixels");
  return m.three_pixel_error();
}

double mean_absolute_error(const DisparityMap& pred, const DisparityMap& gt,
                           const ValidityMask& mask) {
  const auto m = measure("", pred, gt, mask);
  if (m.pixels == 0) throw std::invalid_argument("mean_absolute_error: no valid pixels");
  return m.mean_absolute_error();
}

ValidityMask apply_protocol_mask(const DisparityMap& gt, const ValidityMask& mask,
                                 double max_eval_disp) {
  if (!mask.same_extent(gt)) throw std::invalid_argument("mask and gt extents differ");
  ValidityMask out = mask;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    out.values[i] = mask.values[i] && gt.values[i] < max_eval_disp;
  }
  return out;
}

EvalResult aggregate(std::vector<SampleMetrics> per_sample) {
  EvalResult r;
  std::size_t bad = 0;
  double abs_sum = 0.0;
  for (const auto& m : per_sample) {
    r.pixels += m.pixels;
    bad += m.bad_pixels;
    abs_sum += m.abs_error_sum;
  }
  if (r.pixels == 0) throw std::invalid_argument("evaluation covered no valid pixels");
  r.three_pixel_error = 100.0 * static_cast<double>(bad) / static_cast<double>(r.pixels);
  r.mean_absolute_error = abs_sum / static_cast<double>(r.pixels);
  r.per_sample = std::move(per_sample);
  return r;
}

std::string EvalResult::to_csv() const {
  std::ostringstream os;
  os << "sample,3pe,mae,pixels\n";
  for (const auto& m : per_sample) {
    os << m.name << ',' << format_number(m.three_pixel_error()) << ','
       << format_number(m.mean_absolute_error()) << ',' << m.pixels << '\n';
  }
  os << "TOTAL," << format_number(three_pixel_error) << ','
     << format_number(mean_absolute_error) << ',' << pixels << '\n';
  return os.str();
}

DisparityMap predict(const StereoSample& sample, const PdsNetwork& net,
                     const EstimatorSettings& settings) {
  const auto prepared = pad_to_multiple_of_4(normalize(sample));
  const auto full = infer_disparity(net, prepared.left, prepared.right, settings);
  if (full.same_extent(sample.gt)) return full;
  DisparityMap out(sample.height(), sample.width());
  for (std::size_t y = 0; y < out.height; ++y)
    for (std::size_t x = 0; x < out.width; ++x) out.at(y, x) = full.at(y, x);
  return out;
}

EvalResult evaluate(const std::vector<StereoSample>& samples, const PdsNetwork& net,
                    const EvalSettings& settings) {
  if (samples.empty()) throw std::invalid_argument("evaluate: empty dataset");
  std::vector<SampleMetrics> rows;
  rows.reserve(samples.size());
  for (const auto& s : samples) {
    const auto pred = predict(s, net, settings.estimator);
    const auto mask = apply_protocol_mask(s.gt, s.mask, settings.max_eval_disp);
    rows.push_back(measure(s.name, pred, s.gt, mask));
  }
  return aggregate(std::move(rows));
}

}  // namespace pds
