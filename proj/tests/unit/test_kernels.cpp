#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "thermalfuzz/kernels.hpp"
#include "thermalfuzz/rng.hpp"

namespace tf = thermalfuzz;
namespace k = thermalfuzz::kernels;

namespace {

tf::Tensor make(tf::Shape s, std::vector<double> v) { return tf::Tensor(tf::TensorSpec{std::move(s), tf::DType::fp32}, std::move(v)); }

// Direct sliding-window sum, written independently of the kernel's indexing.
std::vector<double> conv_oracle(const std::vector<std::vector<double>>& img, const std::vector<std::vector<double>>& w,
                                double bias) {
  const std::size_t n = img.size(), kk = w.size(), m = n - kk + 1;
  std::vector<double> out;
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < m; ++c) {
      double s = bias;
      for (std::size_t i = 0; i < kk; ++i)
        for (std::size_t j = 0; j < kk; ++j) s += img[r + i][c + j] * w[i][j];
      out.push_back(s);
    }
  return out;
}

}  // namespace

TEST(Kernels, Conv3x3MatchesSlidingWindow) {
  const std::vector<std::vector<double>> img = {{1, 2, 0, -1}, {3, 1, 4, 2}, {0, -2, 1, 5}, {2, 2, -3, 1}};
  const std::vector<std::vector<double>> w = {{1, 0, -1}, {2, 1, 0}, {0, -1, 3}};
  std::vector<double> flat, wflat;
  for (const auto& r : img) flat.insert(flat.end(), r.begin(), r.end());
  for (const auto& r : w) wflat.insert(wflat.end(), r.begin(), r.end());
  const auto out = k::conv2d(make({4, 4, 1}, flat), wflat, std::vector<double>{0.5}, 3, 1, tf::Precision::fp32);
  ASSERT_EQ(out.spec.shape, (tf::Shape{2, 2, 1}));
  EXPECT_EQ(out.data, conv_oracle(img, w, 0.5));
}

TEST(Kernels, ConvMultiChannelRandom) {
  tf::Rng rng(3);
  const int kk = 2, cin = 2, cout = 3;
  std::vector<double> x(5 * 4 * cin), w(kk * kk * cin * cout), b(cout);
  for (auto& v : x) v = rng.uniform(-1, 1);
  for (auto& v : w) v = rng.uniform(-1, 1);
  for (auto& v : b) v = rng.uniform(-1, 1);
  const auto out = k::conv2d(make({5, 4, cin}, x), w, b, kk, cout, tf::Precision::fp32);
  ASSERT_EQ(out.spec.shape, (tf::Shape{4, 3, cout}));
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 3; ++c)
      for (int o = 0; o < cout; ++o) {
        double s = b[o];
        for (int i = 0; i < kk; ++i)
          for (int j = 0; j < kk; ++j)
            for (int ci = 0; ci < cin; ++ci) {
              const double xv = static_cast<float>(x[((r + i) * 4 + (c + j)) * cin + ci]);
              const double wv = static_cast<float>(w[((i * kk + j) * cin + ci) * cout + o]);
              s += xv * wv;
            }
        EXPECT_NEAR(out.data[(r * 3 + c) * cout + o], s, 1e-6);
      }
}

TEST(Kernels, MatMulScalar) {
  const auto out = k::matmul(make({1, 1}, {2.0}), make({1, 1}, {3.0}), tf::Precision::fp32);
  EXPECT_EQ(out.data, std::vector<double>{6.0});
}

TEST(Kernels, MatMulByHand) {
  const auto out = k::matmul(make({2, 3}, {1, 2, 3, 4, 5, 6}), make({3, 2}, {1, 0, 0, 1, 1, 1}), tf::Precision::fp32);
  EXPECT_EQ(out.data, (std::vector<double>{4, 5, 10, 11}));
}

TEST(Kernels, DenseIdentity) {
  const auto x = make({2, 3}, {1.5, -2, 3, 0, 7, -1});
  const auto out = k::dense(x, k::identity_matrix(3, 3), std::vector<double>(3, 0.0), 3);
  EXPECT_EQ(out.data, x.data);
}

TEST(Kernels, MantissaRoundingIdempotent) {
  tf::Rng rng(11);
  for (int i = 0; i < 2000; ++i) {
    const double x = rng.uniform(-1e4, 1e4);
    for (int bits : {1, 5, 10, 17, 23}) {
      const double once = k::round_to_mantissa(x, bits);
      EXPECT_EQ(k::round_to_mantissa(once, bits), once);
      EXPECT_LE(std::abs(once - x), std::ldexp(std::abs(x), -bits));
    }
  }
}

TEST(Kernels, MantissaRoundingMatchesFloatCast) {
  tf::Rng rng(12);
  for (int i = 0; i < 2000; ++i) {
    const double x = rng.uniform(-100, 100);
    EXPECT_EQ(k::round_to_mantissa(x, 23), k::to_fp32(x));
  }
}

TEST(Kernels, HalfPrecision) {
  EXPECT_EQ(k::to_fp16(1.0 + std::ldexp(1.0, -11)), 1.0);  // ties to even
  EXPECT_EQ(k::to_fp16(1.0 + std::ldexp(1.0, -10)), 1.0 + std::ldexp(1.0, -10));
  EXPECT_EQ(k::to_fp16(1e6), std::numeric_limits<double>::infinity());
  EXPECT_EQ(k::to_fp16(-1e6), -std::numeric_limits<double>::infinity());
  EXPECT_EQ(k::to_fp16(65504.0), 65504.0);
}

TEST(Kernels, Int8QuantizationGrid) {
  const std::vector<double> v{-2.0, -0.5, 0.0, 0.013, 1.0, 2.0};
  const auto q = k::fake_quant_int8(v);
  const double scale = 2.0 / 127.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    EXPECT_NEAR(q[i], v[i], scale / 2 + 1e-15);
    EXPECT_NEAR(std::nearbyint(q[i] / scale), q[i] / scale, 1e-9);
  }
  EXPECT_EQ(q.front(), -2.0);
  EXPECT_EQ(q.back(), 2.0);
}

TEST(Kernels, PoolSamePadding) {
  const auto x = make({3, 1}, {1, 5, 2});
  EXPECT_EQ(k::pool(x, tf::PoolMode::max).data, (std::vector<double>{5, 5, 5}));
  EXPECT_EQ(k::pool(x, tf::PoolMode::avg).data, (std::vector<double>{3, 8.0 / 3.0, 3.5}));
}

TEST(Kernels, AdapterResamples) {
  const auto x = make({4}, {1, 2, 3, 4});
  EXPECT_EQ(k::adapt(x, {{2}, tf::DType::fp32}).data, (std::vector<double>{1, 3}));
  EXPECT_EQ(k::adapt(x, {{8}, tf::DType::fp32}).data, (std::vector<double>{1, 1, 2, 2, 3, 3, 4, 4}));
}

TEST(Kernels, BatchNormByHand) {
  const auto out = k::batch_norm(make({1, 2}, {3.0, -1.0}), std::vector<double>{2.0, 1.0}, std::vector<double>{0.5, 0.0},
                                 std::vector<double>{1.0, -1.0}, std::vector<double>{4.0, 1.0});
  EXPECT_NEAR(out.data[0], 2.0 * 2.0 / std::sqrt(4.0 + 1e-5) + 0.5, 1e-15);
  EXPECT_NEAR(out.data[1], 0.0, 1e-15);
}

TEST(Kernels, RecurrentShapesAndBounds) {
  tf::Rng rng(5);
  std::vector<double> x(6 * 2 * 3);
  for (auto& v : x) v = rng.uniform(-1, 1);
  const auto in = make({6, 2, 3}, x);
  for (auto cell : {k::Cell::rnn, k::Cell::lstm, k::Cell::gru}) {
    k::WeightStream ws(99);
    const auto out = k::recurrent(in, cell, 4, 2, true, ws, nullptr);
    ASSERT_EQ(out.spec.shape, (tf::Shape{6, 2, 8}));
    for (double v : out.data) {
      EXPECT_TRUE(std::isfinite(v));
      EXPECT_LE(std::abs(v), 1.0);
    }
  }
}

TEST(Kernels, RecurrentSkippingEveryStepEmitsInitialState) {
  std::vector<double> x(4 * 1 * 2, 0.7);
  k::WeightStream ws(4);
  const auto out = k::recurrent(make({4, 1, 2}, x), k::Cell::lstm, 3, 1, false, ws,
                                [](int, std::int64_t) { return true; });
  for (double v : out.data) EXPECT_EQ(v, 0.0);
}

TEST(Kernels, RecurrentByHandSingleUnit) {
  // One tanh unit: h_t = tanh(w_in x_t + w_rec h_{t-1} + b_in + b_rec).
  k::WeightStream probe(21);
  const auto rw = k::recurrent_weights(probe, k::Cell::rnn, 1, 1);
  const std::vector<double> xs{0.5, -1.0, 2.0};
  k::WeightStream ws(21);
  const auto out = k::recurrent(make({3, 1, 1}, xs), k::Cell::rnn, 1, 1, false, ws, nullptr);
  double h = 0.0;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    h = std::tanh(rw.w_in[0] * xs[t] + rw.w_rec[0] * h + rw.b_in[0] + rw.b_rec[0]);
    EXPECT_NEAR(out.data[t], h, 1e-15);
  }
}

TEST(Kernels, WeightsAreDeterministic) {
  k::WeightStream a(17), b(17), c(18);
  EXPECT_EQ(a.uniform(32, 1.0), b.uniform(32, 1.0));
  EXPECT_NE(a.uniform(32, 1.0), c.uniform(32, 1.0));
}
