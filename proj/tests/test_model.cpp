#include <gtest/gtest.h>

#include <set>

#include "checks.hpp"
#include "pds/arch_analyzer.hpp"
#include "pds/model.hpp"

using namespace pds;
using pds::oracle::random_tensor;

namespace {

NetConfig tiny_config() {
  NetConfig c = NetConfig::desk();
  c.max_disparity = 16;
  c.embed_channels = 4;
  c.signature_channels = 2;
  c.matching_hidden_channels = 4;
  c.hourglass_base_channels = 4;
  c.hourglass_levels = 1;
  return c;
}

}  // namespace

TEST(NetConfig, ValidatesInvariants) {
  EXPECT_NO_THROW(NetConfig::desk().validate());
  EXPECT_NO_THROW(NetConfig::paper().validate());
  NetConfig c = NetConfig::desk();
  c.max_disparity = 30;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = NetConfig::desk();
  c.signature_channels = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = NetConfig::desk();
  c.hourglass_levels = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(NetConfig, JsonRoundTrip) {
  for (const auto& c : {NetConfig::desk(), NetConfig::paper(), tiny_config()}) {
    EXPECT_EQ(net_config_from_json(to_json(c)), c);
  }
  EXPECT_THROW(net_config_from_json(R"({"max_disparity": 32, "bogus": 1})"), std::exception);
}

TEST(NetConfig, FullScalePresetWidths) {
  const auto c = NetConfig::paper();
  EXPECT_EQ(c.max_disparity, 192);
  EXPECT_EQ(c.embed_channels, 32);
  EXPECT_EQ(c.signature_channels, 8);
}

TEST(Model, EmbedShapeAndSharing) {
  PdsNetwork net(NetConfig::desk(), 1);
  std::mt19937_64 rng(1);
  auto img = random_tensor<float>({3, 32, 64}, rng);
  auto a = net.embed(img);
  EXPECT_EQ(a.shape(), (Shape{8, 8, 16}));
  EXPECT_EQ(net.embed(img, nullptr, "right").to_vector(), a.to_vector());
  EXPECT_THROW(net.embed(random_tensor<float>({3, 30, 64}, rng)), ShapeError);
}

TEST(Model, ShiftRightDescriptor) {
  auto ramp = Tensor::zeros({2, 2, 5});
  auto d = ramp.mutable_data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<float>(i % 5 + 1);
  EXPECT_EQ(shift_right_descriptor(ramp, 0, 8).to_vector(), ramp.to_vector());
  auto one = shift_right_descriptor(ramp, 1, 8);
  for (std::size_t row = 0; row < 4; ++row) {
    EXPECT_EQ(one.data()[row * 5], 0.0f);
    for (std::size_t x = 1; x < 5; ++x) EXPECT_EQ(one.data()[row * 5 + x], static_cast<float>(x));
  }
  const auto gone = shift_right_descriptor(ramp, 5, 8);
  for (float v : gone.data()) EXPECT_EQ(v, 0.0f);
  EXPECT_THROW(shift_right_descriptor(ramp, 8, 8), std::exception);
}

TEST(Model, MatchShapeAndDisparityEquivariance) {
  PdsNetwork net(NetConfig::desk(), 2);
  std::mt19937_64 rng(2);
  auto l = random_tensor<float>({8, 8, 16}, rng);
  auto r = random_tensor<float>({8, 8, 16}, rng);
  auto sig = net.match(l, r);
  EXPECT_EQ(sig.shape(), (Shape{4, 8, 16}));
  // The same descriptor pair gives the same signature at any disparity index.
  EXPECT_EQ(net.match(l, r, nullptr, "d5").to_vector(), sig.to_vector());
  auto all = net.match_all(l, r, 32);
  EXPECT_EQ(all.shape(), (Shape{4, 8, 8, 16}));
  for (std::size_t dq : {0u, 3u, 7u}) {
    auto expected = net.match(l, shift_right_descriptor(r, dq, 8));
    auto got = slice(all, 1, dq, 1);
    EXPECT_EQ(got.to_vector(), expected.to_vector()) << "d_q " << dq;
  }
  EXPECT_THROW(net.match(l, random_tensor<float>({8, 8, 12}, rng)), ShapeError);
}

TEST(Model, RegularizeShape) {
  PdsNetwork net(NetConfig::desk(), 3);
  std::mt19937_64 rng(3);
  auto costs = net.regularize(random_tensor<float>({4, 8, 8, 16}, rng));
  EXPECT_EQ(costs.values.shape(), (Shape{16, 32, 64}));
  EXPECT_THROW(net.regularize(random_tensor<float>({4, 6, 8, 16}, rng)), std::exception);
}

TEST(Model, ForwardShapesForRangeAndSize) {
  PdsNetwork net(NetConfig::desk(), 4);
  std::mt19937_64 rng(4);
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{32, 64}, {20, 44}, {12, 8}}) {
    auto l = random_tensor<float>({3, h, w}, rng);
    auto r = random_tensor<float>({3, h, w}, rng);
    EXPECT_EQ(net.forward(l, r).values.shape(), (Shape{16, h, w}));
    EXPECT_EQ(net.forward(l, r, 64).values.shape(), (Shape{32, h, w}));
    EXPECT_EQ(net.forward(l, r, 12).values.shape(), (Shape{6, h, w}));
  }
  auto l = random_tensor<float>({3, 32, 64}, rng);
  EXPECT_THROW(net.forward(l, random_tensor<float>({3, 32, 60}, rng)), ShapeError);
  EXPECT_THROW(net.forward(l, l, 30), std::invalid_argument);
}

TEST(Model, ExtendedRangeKeepsLeadingSignatures) {
  PdsNetwork net(NetConfig::desk(), 5);
  std::mt19937_64 rng(5);
  auto l = net.embed(random_tensor<float>({3, 32, 64}, rng));
  auto r = net.embed(random_tensor<float>({3, 32, 64}, rng));
  auto base = net.match_all(l, r, 32);
  auto wide = net.match_all(l, r, 64);
  EXPECT_EQ(wide.dim(1), 16u);
  EXPECT_EQ(slice(wide, 1, 0, 8).to_vector(), base.to_vector());
}

TEST(Model, EveryParameterReceivesGradient) {
  PdsNetwork net(NetConfig::desk(), 6);
  std::mt19937_64 rng(6);
  auto l = random_tensor<float>({3, 32, 64}, rng);
  auto r = random_tensor<float>({3, 32, 64}, rng);
  auto costs = net.forward(l, r);
  auto probe = random_tensor<float>(costs.values.shape(), rng);
  sum(costs.values * probe).backward();
  for (const auto& p : net.parameters()) {
    ASSERT_TRUE(p.value.has_grad()) << p.name;
    double norm = 0;
    for (float g : p.value.grad()) norm += std::abs(g);
    EXPECT_GT(norm, 0.0) << p.name;
  }
}

TEST(Model, ParameterNamesAreUnique) {
  PdsNetwork net(NetConfig::paper(), 1);
  std::set<std::string> names;
  for (const auto& p : net.parameters()) EXPECT_TRUE(names.insert(p.name).second) << p.name;
  EXPECT_EQ(net.parameter_count(), analyze(NetConfig::paper(), 540, 960).total_params);
}

TEST(Model, SeedsAreDeterministic) {
  PdsNetwork a(NetConfig::desk(), 9), b(NetConfig::desk(), 9), c(NetConfig::desk(), 10);
  EXPECT_EQ(a.parameter("reg.stem.weight").to_vector(), b.parameter("reg.stem.weight").to_vector());
  EXPECT_NE(a.parameter("reg.stem.weight").to_vector(), c.parameter("reg.stem.weight").to_vector());
}

TEST(Model, TraceMatchesAnalyzerRows) {
  const auto cfg = NetConfig::desk();
  PdsNetwork net(cfg, 7);
  LayerTrace trace;
  net.forward(Tensor::zeros({3, 36, 52}), Tensor::zeros({3, 36, 52}), 40, &trace);
  const auto report = analyze(cfg, 36, 52, 40);
  ASSERT_EQ(trace.size(), report.rows.size());
  for (std::size_t i = 0; i < trace.size(); ++i) {
    EXPECT_EQ(trace[i].name, report.rows[i].name);
    EXPECT_EQ(trace[i].shape, report.rows[i].shape) << trace[i].name;
  }
}

TEST(Model, CastToDoubleGivesSameCosts) {
  PdsNetwork net(tiny_config(), 8);
  std::mt19937_64 rng(8);
  auto l = random_tensor<float>({3, 8, 16}, rng);
  auto r = random_tensor<float>({3, 8, 16}, rng);
  auto f = net.forward(l, r).values.to_vector();
  auto d = net.cast<double>().forward(l.cast<double>(), r.cast<double>()).values.to_vector();
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_NEAR(f[i], d[i], 1e-4);
}

// Sampled entries of every parameter; the acceptance runner checks all of them.
TEST(ModelGradient, DeskNetworkCrossEntropy) {
  auto g = oracle::check_network_gradients(NetConfig::desk(), 8, 16,
                                           LossKind::kSubpixelCrossEntropy, 11, 12);
  EXPECT_TRUE(g.ok()) << g.failures << "/" << g.checked << " " << g.worst_where;
}

TEST(ModelGradient, DeskNetworkL1) {
  auto g = oracle::check_network_gradients(NetConfig::desk(), 8, 16, LossKind::kL1SoftArgmin,
                                           12, 12);
  EXPECT_TRUE(g.ok()) << g.failures << "/" << g.checked << " " << g.worst_where;
}

TEST(ModelGradient, TinyNetworkEveryEntry) {
  auto g = oracle::check_network_gradients(tiny_config(), 8, 8, LossKind::kSubpixelCrossEntropy,
                                           13);
  EXPECT_TRUE(g.ok()) << g.failures << "/" << g.checked << " " << g.worst_where;
}
