#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "tsf/savgol.hpp"

using namespace tsf;


TEST(Savgol, ConstantSeriesUnchanged) {
  const std::vector<double> s{5, 5, 5, 5, 5};
  for (double v : savgol_smooth(s, 5, 2)) EXPECT_NEAR(v, 5.0, 1e-12);
}

TEST(Savgol, QuadraticReproducedExactly) {
  std::vector<double> s;
  for (int t = 0; t <= 10; ++t) s.push_back(t * t);
  const auto out = savgol_smooth(s, 5, 2);
  ASSERT_EQ(out.size(), s.size());
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(out[i], s[i], 1e-9);
}

TEST(Savgol, RandomQuadraticsReproducedForSeveralWindows) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (const std::size_t w : {5u, 9u, 21u}) {
    for (int rep = 0; rep < 10; ++rep) {
      const double a = u(rng), b = u(rng), c = u(rng);
      std::vector<double> s;
      for (int t = 0; t < 60; ++t) s.push_back(a + b * t + c * t * t);
      const auto out = savgol_smooth(s, w, 2);
      for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(out[i], s[i], 1e-9) << "window " << w;
    }
  }
}

TEST(Savgol, FiveTapCentreWeights) {
  const auto w = savgol_weights(5, 2, 2);
  const double expected[] = {-3.0 / 35, 12.0 / 35, 17.0 / 35, 12.0 / 35, -3.0 / 35};
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(w[i], expected[i], 1e-12);
}

TEST(Savgol, WeightsMatchNormalEquations) {
  for (const std::size_t window : {5u, 9u, 21u}) {
    for (std::size_t at = 0; at < window; ++at) {
      const auto got = savgol_weights(window, 2, at);
      const auto want = oracle::savgol_normal_equations(window, 2, at);
      for (std::size_t i = 0; i < window; ++i) EXPECT_NEAR(got[i], want[i], 1e-12) << window << "/" << at;
    }
  }
  const auto cubic = savgol_weights(7, 3, 3);
  const auto cubic_ref = oracle::savgol_normal_equations(7, 3, 3);
  for (std::size_t i = 0; i < 7; ++i) EXPECT_NEAR(cubic[i], cubic_ref[i], 1e-12);
}

TEST(Savgol, FilterIsLinear) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n;
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> x(50), y(50), mix(50);
    const double a = n(rng), b = n(rng);
    for (std::size_t i = 0; i < 50; ++i) {
      x[i] = n(rng);
      y[i] = n(rng);
      mix[i] = a * x[i] + b * y[i];
    }
    const auto fx = savgol_smooth(x, 9, 2), fy = savgol_smooth(y, 9, 2), fm = savgol_smooth(mix, 9, 2);
    for (std::size_t i = 0; i < 50; ++i) EXPECT_NEAR(fm[i], a * fx[i] + b * fy[i], 1e-10);
  }
}

TEST(Savgol, RejectsBadArguments) {
  const std::vector<double> s(10, 1.0);
  EXPECT_THROW(savgol_smooth(s, 4, 2), std::invalid_argument);
  EXPECT_THROW(savgol_smooth(s, 11, 2), std::invalid_argument);
  EXPECT_THROW(savgol_smooth(s, 3, 3), std::invalid_argument);
}
