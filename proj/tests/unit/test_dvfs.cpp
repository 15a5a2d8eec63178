#include <gtest/gtest.h>

#include "thermalfuzz/dvfs.hpp"

namespace tf = thermalfuzz;

TEST(Dvfs, BoundaryValuesAreExact) {
  const tf::GpuProfile p;
  EXPECT_EQ(tf::frequency(p, p.t_nominal), p.f_base);
  EXPECT_EQ(tf::frequency(p, p.t_max), 0.85 * p.f_base);
  EXPECT_EQ(tf::frequency(p, p.t_min), 1.05 * p.f_base);
  EXPECT_EQ(tf::frequency_ratio(p, p.t_nominal), 1.0);
  EXPECT_EQ(tf::frequency_ratio(p, p.t_max), 0.85);
  EXPECT_EQ(tf::frequency_ratio(p, p.t_min), 1.05);
}

TEST(Dvfs, InteriorPointByHand) {
  tf::GpuProfile p;
  p.f_base = 1000.0;
  // 15 degC: 1 + 0.05 * 25 / 80 = 1.015625, exactly representable.
  EXPECT_EQ(tf::frequency(p, 15.0), 1015.625);
  // 65 degC: 1 - 0.15 * 25 / 50 = 0.925.
  EXPECT_DOUBLE_EQ(tf::frequency(p, 65.0), 925.0);
}

TEST(Dvfs, ClampsOutsideRange) {
  const tf::GpuProfile p;
  EXPECT_EQ(tf::frequency(p, 200.0), tf::frequency(p, p.t_max));
  EXPECT_EQ(tf::frequency(p, -273.0), tf::frequency(p, p.t_min));
}

TEST(Dvfs, NonIncreasingInTemperature) {
  const tf::GpuProfile p;
  double prev = tf::frequency(p, -60.0);
  for (int i = 1; i <= 2000; ++i) {
    const double t = -60.0 + 170.0 * i / 2000.0;
    const double f = tf::frequency(p, t);
    EXPECT_LE(f, prev) << t;
    prev = f;
  }
}

TEST(Dvfs, RatioBounds) {
  const tf::GpuProfile p;
  for (int t = -100; t <= 150; ++t) {
    const double r = tf::frequency_ratio(p, t);
    EXPECT_GE(r, 1.0 - p.alpha);
    EXPECT_LE(r, 1.0 + p.gamma);
  }
}
