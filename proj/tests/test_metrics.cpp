#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "pds/metrics.hpp"

using namespace pds;

namespace {

DisparityMap offset(const DisparityMap& m, const std::vector<float>& add) {
  DisparityMap out = m;
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] += add[i % add.size()];
  return out;
}

}  // namespace

TEST(ThreePixelError, Examples) {
  DisparityMap gt(2, 2, std::vector<float>{1, 5, 9, 20});
  ValidityMask all(2, 2, 1);
  EXPECT_EQ(three_pixel_error(gt, gt, all), 0.0);
  EXPECT_EQ(three_pixel_error(offset(gt, {3.0f}), gt, all), 0.0);
  EXPECT_EQ(three_pixel_error(offset(gt, {4.0f, 0.0f}), gt, all), 50.0);
  EXPECT_EQ(three_pixel_error(offset(gt, {-3.5f}), gt, all), 100.0);
  EXPECT_THROW(three_pixel_error(gt, gt, ValidityMask(2, 2, 0)), std::invalid_argument);
}

TEST(ThreePixelError, IgnoresInvalidPixels) {
  DisparityMap gt(1, 4, 10.0f);
  DisparityMap pred(1, 4, std::vector<float>{10, 50, 10, 50});
  ValidityMask mask(1, 4, std::vector<std::uint8_t>{1, 0, 1, 1});
  EXPECT_NEAR(three_pixel_error(pred, gt, mask), 100.0 / 3.0, 1e-12);
}

TEST(MeanAbsoluteError, Examples) {
  DisparityMap gt(1, 4, std::vector<float>{0, 2, 4, 6});
  ValidityMask all(1, 4, 1);
  EXPECT_EQ(mean_absolute_error(gt, gt, all), 0.0);
  EXPECT_NEAR(mean_absolute_error(offset(gt, {1.5f}), gt, all), 1.5, 1e-12);
  EXPECT_NEAR(mean_absolute_error(offset(gt, {1.0f, -3.0f}), gt, all), 2.0, 1e-12);
  EXPECT_THROW(mean_absolute_error(gt, gt, ValidityMask(1, 4, 0)), std::invalid_argument);
}

TEST(ProtocolMask, Examples) {
  ValidityMask all(2, 2, 1);
  DisparityMap gt(2, 2, std::vector<float>{100, 200, 100, 200});
  EXPECT_EQ(apply_protocol_mask(gt, all, std::numeric_limits<double>::infinity()), all);
  EXPECT_EQ(count_valid(apply_protocol_mask(gt, all, 192)), 2u);
  const DisparityMap far(2, 2, 200.0f);
  const auto empty = apply_protocol_mask(far, all, 192);
  EXPECT_EQ(count_valid(empty), 0u);
  EXPECT_THROW(three_pixel_error(far, far, empty), std::invalid_argument);
  // The bound is strict and the input mask is respected.
  DisparityMap edge(1, 3, std::vector<float>{191.99f, 192.0f, 10.0f});
  ValidityMask some(1, 3, std::vector<std::uint8_t>{1, 1, 0});
  EXPECT_EQ(apply_protocol_mask(edge, some, 192).values, (std::vector<std::uint8_t>{1, 0, 0}));
}

TEST(ProtocolMask, RestrictingASupersetEqualsDirectMetrics) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> d(0.0f, 300.0f), e(-8.0f, 8.0f);
  DisparityMap gt(8, 8), pred(8, 8);
  for (std::size_t i = 0; i < 64; ++i) {
    gt.values[i] = d(rng);
    pred.values[i] = gt.values[i] + e(rng);
  }
  const auto m = apply_protocol_mask(gt, ValidityMask(8, 8, 1), 192);
  ValidityMask direct(8, 8);
  for (std::size_t i = 0; i < 64; ++i) direct.values[i] = gt.values[i] < 192;
  EXPECT_EQ(three_pixel_error(pred, gt, m), three_pixel_error(pred, gt, direct));
  EXPECT_EQ(mean_absolute_error(pred, gt, m), mean_absolute_error(pred, gt, direct));
}

TEST(Aggregate, PixelWeighted) {
  // Sample a: 4 pixels, 1 bad, |e| sum 6. Sample b: 12 pixels, 6 bad, sum 30.
  DisparityMap ga(2, 2, 10.0f), pa(2, 2, std::vector<float>{10, 11, 12, 17});
  DisparityMap gb(3, 4, 5.0f), pb = offset(gb, {0.5f, 4.5f});
  auto a = measure("a", pa, ga, ValidityMask(2, 2, 1));
  auto b = measure("b", pb, gb, ValidityMask(3, 4, 1));
  EXPECT_EQ(a.bad_pixels, 1u);
  EXPECT_DOUBLE_EQ(a.abs_error_sum, 10.0);
  EXPECT_DOUBLE_EQ(a.three_pixel_error(), 25.0);
  const auto r = aggregate({a, b});
  EXPECT_EQ(r.pixels, 16u);
  EXPECT_DOUBLE_EQ(r.three_pixel_error, 100.0 * (1 + 6) / 16.0);
  EXPECT_DOUBLE_EQ(r.mean_absolute_error, (10.0 + 6 * 0.5 + 6 * 4.5) / 16.0);
  EXPECT_THROW(aggregate({}), std::invalid_argument);
}

TEST(Aggregate, InvariantToSampleOrder) {
  DisparityMap g(1, 3, 1.0f);
  auto a = measure("a", offset(g, {5.0f, 0.0f}), g, ValidityMask(1, 3, 1));
  auto b = measure("b", offset(g, {0.25f}), g, ValidityMask(1, 3, 1));
  const auto x = aggregate({a, b}), y = aggregate({b, a});
  EXPECT_EQ(x.three_pixel_error, y.three_pixel_error);
  EXPECT_DOUBLE_EQ(x.mean_absolute_error, y.mean_absolute_error);
}

TEST(Aggregate, CsvLayout) {
  DisparityMap g(1, 2, 2.0f);
  auto a = measure("left_one", offset(g, {4.0f, 1.0f}), g, ValidityMask(1, 2, 1));
  auto none = measure("empty", g, g, ValidityMask(1, 2, 0));
  EXPECT_TRUE(std::isnan(none.three_pixel_error()));
  const auto csv = aggregate({a, none}).to_csv();
  EXPECT_EQ(csv,
            "sample,3pe,mae,pixels\n"
            "left_one,50.000000,2.500000,2\n"
            "empty,nan,nan,0\n"
            "TOTAL,50.000000,2.500000,2\n");
}

TEST(Evaluate, EmptySetIsAnError) {
  PdsNetwork net(NetConfig::desk(), 1);
  EXPECT_THROW(evaluate({}, net, EvalSettings{}), std::invalid_argument);
}

TEST(Evaluate, DeterministicCsvAndPaddedInputs) {
  PdsNetwork net(NetConfig::desk(), 2);
  auto samples = make_synthetic_dataset({.count = 2, .height = 30, .width = 62, .max_disparity = 12}, 3);
  EvalSettings s;
  const auto a = evaluate(samples, net, s);
  const auto b = evaluate(samples, net, s);
  EXPECT_EQ(a.to_csv(), b.to_csv());
  EXPECT_EQ(a.pixels, 2u * 30 * 62);
  const auto pred = predict(samples[0], net, s.estimator);
  EXPECT_TRUE(pred.same_extent(30, 62));
  s.max_eval_disp = 6;
  EXPECT_LT(evaluate(samples, net, s).pixels, a.pixels);
}
