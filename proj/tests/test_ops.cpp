#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "pds/ops.hpp"
#include "checks.hpp"

using namespace pds;
using pds::oracle::check_gradients;
using pds::oracle::Geometry3;
using pds::oracle::random_tensor;

namespace {

std::vector<double> values(const Tensor64& t) { return t.to_vector(); }

void expect_near_all(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "at " << i;
}

}  // namespace

TEST(Conv2d, IdentityKernel) {
  std::mt19937_64 rng(1);
  auto x = random_tensor<float>({2, 4, 5}, rng);
  auto w = Tensor::zeros({2, 2, 1, 1});
  w.mutable_data()[0] = 1;
  w.mutable_data()[3] = 1;
  auto y = conv2d(x, w, Tensor::zeros({2}), 1, 0);
  EXPECT_EQ(y.to_vector(), x.to_vector());
}

TEST(Conv2d, CountsOnes) {
  auto y = conv2d(Tensor::full({1, 3, 3}, 1), Tensor::full({1, 1, 3, 3}, 1), Tensor{}, 1, 0);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 1}));
  EXPECT_FLOAT_EQ(y.item(), 9.0f);
}

TEST(Conv2d, MatchesNaiveLoops) {
  std::mt19937_64 rng(2);
  auto x = random_tensor<double>({2, 5, 5}, rng);
  auto w = random_tensor<double>({3, 2, 3, 3}, rng);
  auto b = random_tensor<double>({3}, rng);
  for (std::size_t stride : {1u, 2u}) {
    for (std::size_t pad : {0u, 1u}) {
      auto y = conv2d(x, w, b, stride, pad);
      Geometry3 out{};
      auto ref = oracle::naive_conv3d(values(x), {2, 1, 5, 5}, values(w), 3, 1, 3, 3, values(b),
                                       {1, stride, stride}, {0, pad, pad}, out);
      EXPECT_EQ(y.shape(), (Shape{3, out.h, out.w}));
      expect_near_all(y.to_vector(), ref, 1e-6);
    }
  }
}

TEST(Conv2d, ShapeErrorsNameTheAxis) {
  auto x = Tensor::zeros({2, 5, 5});
  try {
    conv2d(x, Tensor::zeros({3, 4, 3, 3}), Tensor{}, 1, 1);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("channel"), std::string::npos) << e.what();
  }
  EXPECT_THROW(conv2d(x, Tensor::zeros({3, 2, 2, 2}), Tensor{}, 1, 0), ShapeError);
  EXPECT_THROW(conv2d(x, Tensor::zeros({3, 2, 7, 7}), Tensor{}, 1, 0), ShapeError);
}

TEST(Conv3d, IdentityKernel) {
  std::mt19937_64 rng(3);
  auto x = random_tensor<float>({1, 3, 4, 5}, rng);
  auto y = conv3d(x, Tensor::full({1, 1, 1, 1, 1}, 1), Tensor{}, 1, 0);
  EXPECT_EQ(y.to_vector(), x.to_vector());
}

TEST(Conv3d, CountsOnes) {
  auto y = conv3d(Tensor::full({1, 3, 3, 3}, 1), Tensor::full({1, 1, 3, 3, 3}, 1), Tensor{}, 1, 0);
  EXPECT_FLOAT_EQ(y.item(), 27.0f);
}

TEST(Conv3d, MatchesNaiveLoops) {
  std::mt19937_64 rng(4);
  auto x = random_tensor<double>({2, 5, 4, 6}, rng);
  auto w = random_tensor<double>({3, 2, 3, 3, 3}, rng);
  auto b = random_tensor<double>({3}, rng);
  const Extent3 strides[] = {{1, 1, 1}, {2, 2, 2}, {1, 2, 2}};
  for (auto s : strides) {
    auto y = conv3d(x, w, b, s, Extent3{1, 1, 1});
    Geometry3 out{};
    auto ref = oracle::naive_conv3d(values(x), {2, 5, 4, 6}, values(w), 3, 3, 3, 3, values(b), s,
                                     {1, 1, 1}, out);
    EXPECT_EQ(y.shape(), (Shape{3, out.d, out.h, out.w}));
    expect_near_all(y.to_vector(), ref, 1e-6);
  }
}

TEST(TransposedConv3d, IdentityKernel) {
  std::mt19937_64 rng(5);
  auto x = random_tensor<float>({1, 2, 3, 4}, rng);
  auto y = transposed_conv3d(x, Tensor::full({1, 1, 1, 1, 1}, 1), Tensor{}, 1, 0);
  EXPECT_EQ(y.to_vector(), x.to_vector());
}

TEST(TransposedConv3d, OnesScatterStrideTwo) {
  auto x = Tensor64::full({1, 2, 2, 2}, 1);
  auto w = Tensor64::full({1, 1, 2, 2, 2}, 1);
  auto y = transposed_conv3d(x, w, Tensor64{}, 2, 0);
  ASSERT_EQ(y.shape(), (Shape{1, 4, 4, 4}));
  Geometry3 out{};
  auto ref = oracle::scatter_transposed_conv3d(values(x), {1, 2, 2, 2}, values(w), 1, 2, 2, 2,
                                                {}, {2, 2, 2}, {0, 0, 0}, {0, 0, 0}, out);
  EXPECT_EQ(y.to_vector(), ref);
}

TEST(TransposedConv3d, MatchesScatterWithPaddingAndOutputPadding) {
  std::mt19937_64 rng(6);
  auto x = random_tensor<double>({3, 2, 3, 4}, rng);
  auto w = random_tensor<double>({3, 2, 3, 3, 3}, rng);
  auto b = random_tensor<double>({2}, rng);
  const Extent3 s{2, 2, 2}, p{1, 1, 1}, op{1, 0, 1};
  auto y = transposed_conv3d(x, w, b, s, p, op);
  Geometry3 out{};
  auto ref = oracle::scatter_transposed_conv3d(values(x), {3, 2, 3, 4}, values(w), 2, 3, 3, 3,
                                                values(b), s, p, op, out);
  EXPECT_EQ(y.shape(), (Shape{2, out.d, out.h, out.w}));
  expect_near_all(y.to_vector(), ref, 1e-6);
}

TEST(TransposedConv3d, RejectsBadGeometry) {
  auto x = Tensor::zeros({1, 2, 2, 2});
  auto w = Tensor::zeros({1, 1, 3, 3, 3});
  EXPECT_THROW(transposed_conv3d(x, w, Tensor{}, 3, 1), ShapeError);
  EXPECT_THROW(transposed_conv3d(x, w, Tensor{}, Extent3{2, 2, 2}, Extent3{1, 1, 1},
                                 Extent3{2, 0, 0}),
               ShapeError);
  EXPECT_THROW(transposed_conv3d(x, Tensor::zeros({2, 1, 3, 3, 3}), Tensor{}, 1, 1), ShapeError);
}

TEST(TransposedConv3d, IsTheAdjointOfConv3d) {
  std::mt19937_64 rng(7);
  struct Case {
    Extent3 stride, pad;
    Shape x;
  };
  const Case cases[] = {{{1, 1, 1}, {1, 1, 1}, {2, 4, 5, 6}},
                        {{2, 2, 2}, {1, 1, 1}, {2, 5, 7, 6}},
                        {{1, 2, 2}, {0, 1, 1}, {2, 4, 6, 6}}};
  for (const auto& c : cases) {
    auto x = random_tensor<double>(c.x, rng);
    auto w = random_tensor<double>({3, 2, 3, 3, 3}, rng);
    auto cx = conv3d(x, w, Tensor64{}, c.stride, c.pad);
    auto y = random_tensor<double>(cx.shape(), rng);
    Extent3 op{};
    for (int a = 0; a < 3; ++a) {
      const std::size_t back = c.stride[a] * (cx.dim(a + 1) - 1) + 3 - 2 * c.pad[a];
      op[a] = c.x[a + 1] - back;
    }
    auto ty = transposed_conv3d(y, w, Tensor64{}, c.stride, c.pad, op);
    ASSERT_EQ(ty.shape(), x.shape());
    const double lhs = oracle::dot(cx.data(), y.data());
    const double rhs = oracle::dot(x.data(), ty.data());
    EXPECT_NEAR(lhs, rhs, 1e-5 * std::max(1.0, std::abs(lhs)));
  }
}

TEST(InstanceNorm, ConstantChannelGivesBeta) {
  auto y = instance_norm(Tensor::full({2, 3, 3}, 4.0f), Tensor::from({2}, {1.5f, 2.0f}),
                         Tensor::from({2}, {0.25f, -1.0f}), 1e-5);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_FLOAT_EQ(y.data()[i], 0.25f);
  for (std::size_t i = 9; i < 18; ++i) EXPECT_FLOAT_EQ(y.data()[i], -1.0f);
}

TEST(InstanceNorm, SymmetricPair) {
  const double eps = 1e-5;
  auto y = instance_norm(Tensor64::from({1, 2}, {-1, 1}), Tensor64::full({1}, 1),
                         Tensor64::zeros({1}), eps);
  EXPECT_NEAR(y.data()[0], -1 / std::sqrt(1 + eps), 1e-12);
  EXPECT_NEAR(y.data()[1], 1 / std::sqrt(1 + eps), 1e-12);
}

TEST(InstanceNorm, StandardizesEachChannel) {
  std::mt19937_64 rng(8);
  auto x = random_tensor<float>({3, 4, 4}, rng, -3, 5);
  auto y = instance_norm(x, Tensor::full({3}, 1), Tensor::zeros({3}), 1e-5);
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0, v = 0;
    for (std::size_t i = 0; i < 16; ++i) m += y.data()[c * 16 + i];
    m /= 16;
    for (std::size_t i = 0; i < 16; ++i) v += std::pow(y.data()[c * 16 + i] - m, 2);
    EXPECT_LE(std::abs(m), 1e-6);
    EXPECT_NEAR(std::sqrt(v / 16), 1.0, 1e-3);
  }
}

TEST(Softmax, ZerosAreUniform) {
  auto y = softmax(Tensor::zeros({4}), 0);
  for (float v : y.data()) EXPECT_NEAR(v, 0.25f, 1e-7);
}

TEST(Softmax, LogInputsGiveClosedForm) {
  auto y = softmax(Tensor64::from({4}, {std::log(1.0), std::log(2.0), std::log(3.0), std::log(4.0)}), 0);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(y.data()[i], (i + 1) / 10.0, 1e-6);
  auto sharp = softmax(Tensor64::from({4}, {2 * std::log(1.0), 2 * std::log(2.0), 2 * std::log(3.0),
                                            2 * std::log(4.0)}),
                       0);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(sharp.data()[i], (i + 1) * (i + 1) / 30.0, 1e-6);
}

TEST(Softmax, SumsToOneAlongEachAxis) {
  std::mt19937_64 rng(9);
  auto x = random_tensor<float>({3, 4, 5}, rng, -6, 6);
  for (std::size_t axis = 0; axis < 3; ++axis) {
    auto s = sum_axis(softmax(x, axis), axis);
    for (float v : s.data()) EXPECT_NEAR(v, 1.0f, 1e-6);
  }
  EXPECT_THROW(softmax(x, 3), ShapeError);
}

TEST(Softmax, LogSoftmaxIsLogOfSoftmax) {
  std::mt19937_64 rng(10);
  auto x = random_tensor<float>({5, 3, 2}, rng, -4, 4);
  auto a = log_softmax(x, 0);
  auto b = pds::log(softmax(x, 0));
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a.data()[i], b.data()[i], 1e-6);
}

TEST(Plumbing, ShiftRightFillsZeros) {
  auto x = Tensor::from({1, 1, 4}, {1, 2, 3, 4});
  EXPECT_EQ(shift_right(x, 1).to_vector(), (std::vector<float>{0, 1, 2, 3}));
  EXPECT_EQ(shift_right(x, 4).to_vector(), (std::vector<float>{0, 0, 0, 0}));
}

TEST(Plumbing, ConcatSliceStack) {
  auto a = Tensor::from({1, 2}, {1, 2});
  auto b = Tensor::from({2, 2}, {3, 4, 5, 6});
  auto c = concat(std::vector{a, b}, 0);
  EXPECT_EQ(c.shape(), (Shape{3, 2}));
  EXPECT_EQ(slice(c, 0, 1, 2).to_vector(), b.to_vector());
  EXPECT_EQ(slice(c, 1, 1, 1).to_vector(), (std::vector<float>{2, 4, 6}));
  auto s = stack(std::vector{a, a}, 1);
  EXPECT_EQ(s.shape(), (Shape{1, 2, 2}));
  EXPECT_THROW(slice(c, 0, 2, 2), ShapeError);
  EXPECT_THROW(concat(std::vector{a, b}, 1), ShapeError);
}

TEST(Plumbing, LeakyRelu) {
  auto y = leaky_relu(Tensor::from({3}, {-2, 0, 3}), 0.1);
  EXPECT_FLOAT_EQ(y.data()[0], -0.2f);
  EXPECT_FLOAT_EQ(y.data()[1], 0.0f);
  EXPECT_FLOAT_EQ(y.data()[2], 3.0f);
}

// Finite differences, one test per op. Losses weight the output by a fixed
// random tensor so every output entry contributes.

TEST(Gradients, EveryOpMatchesFiniteDifferences) {
  const auto suite = oracle::op_gradient_suite(42);
  EXPECT_GE(suite.size(), 22u);
  for (const auto& c : suite) {
    EXPECT_TRUE(c.result.ok()) << c.name << ": " << c.result.failures << "/" << c.result.checked
                               << " worst " << c.result.worst_where;
    EXPECT_GT(c.result.checked, 0u) << c.name;
  }
}
