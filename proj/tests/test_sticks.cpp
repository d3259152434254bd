#include "nmdr/random.hpp"
#include "nmdr/sticks.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

using namespace nmdr;

TEST(Logistic, Midpoint) { EXPECT_DOUBLE_EQ(logistic(0.0), 0.5); }

TEST(Logistic, Reflection) {
  for (double x : {3.7, 0.01, 12.5, 40.0}) EXPECT_NEAR(logistic(-x), 1.0 - logistic(x), 1e-15) << x;
}

TEST(Logistic, SaturatesWithoutOverflow) {
  EXPECT_EQ(logistic(500.0), 1.0);
  double lo = logistic(-500.0);
  EXPECT_TRUE(std::isfinite(lo));
  EXPECT_GE(lo, 0.0);
  EXPECT_LT(lo, 1e-200);
  EXPECT_TRUE(std::isfinite(log_logistic(-500.0)));
  EXPECT_NEAR(log_logistic(-500.0), -500.0, 1e-12);
  EXPECT_NEAR(log_logistic(500.0), 0.0, 1e-200);
}

TEST(Sticks, ZeroScoresHalveTheStick) {
  auto w = stick_weights({0.0, 0.0, 0.0});
  ASSERT_EQ(w.K(), 3);
  EXPECT_NEAR(w.pi[0], 0.5, 1e-15);
  EXPECT_NEAR(w.pi[1], 0.25, 1e-15);
  EXPECT_NEAR(w.pi[2], 0.125, 1e-15);
  EXPECT_NEAR(w.tail, 0.125, 1e-15);
}

TEST(Sticks, MatchesDirectProduct) {
  std::vector<double> v{-1.2, 0.4, 2.0};
  auto w = stick_weights(v);
  double rest = 1.0;
  for (int k = 0; k < 3; ++k) {
    double expect = rest / (1.0 + std::exp(-v[k]));
    EXPECT_NEAR(w.pi[k], expect, 1e-14);
    rest *= 1.0 / (1.0 + std::exp(v[k]));
  }
  EXPECT_NEAR(w.tail, rest, 1e-14);
}

TEST(Sticks, TruncatedLastStickTakesRemainder) {
  auto w = stick_weights({0.0, 0.0, 7.0}, true);
  EXPECT_NEAR(w.pi[2], 0.25, 1e-15);
  EXPECT_EQ(w.tail, 0.0);
}

TEST(Sticks, NormalizedOnRandomScores) {
  Rng rng(11);
  for (int rep = 0; rep < 2000; ++rep) {
    int K = 1 + static_cast<int>(rng.index(60));
    double scale = rep % 3 == 0 ? 30.0 : 2.0;
    std::vector<double> v(K);
    for (auto& x : v) x = rng.normal(0.0, scale);
    for (bool truncated : {false, true}) {
      auto w = stick_weights(v, truncated);
      double total = w.tail;
      for (double p : w.pi) {
        EXPECT_GE(p, 0.0);
        total += p;
      }
      ASSERT_NEAR(total, 1.0, 1e-12) << "K=" << K << " truncated=" << truncated;
    }
  }
}

TEST(Sticks, AccumulatorMatchesFullRecompute) {
  std::vector<double> v{0.3, -2.0, 1.1, 0.0, -0.7};
  StickAccumulator acc;
  std::vector<double> incremental;
  for (double x : v) incremental.push_back(std::exp(acc.next(x)));
  auto full = stick_weights(v);
  for (std::size_t k = 0; k < v.size(); ++k) EXPECT_EQ(incremental[k], full.pi[k]);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int k = 0; k < 100; ++k) {
    double x = a.normal();
    EXPECT_EQ(x, b.normal());
    differs |= x != c.normal();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, StateRoundTrip) {
  Rng a(5);
  for (int k = 0; k < 17; ++k) a.gamma(0.7, 2.0);
  Rng b;
  b.set_state(a.state());
  for (int k = 0; k < 50; ++k) EXPECT_EQ(a.uniform(), b.uniform());
}

TEST(Rng, GammaMoments) {
  Rng rng(3);
  for (auto [shape, rate] : {std::pair{0.5, 2.0}, std::pair{3.0, 1.5}}) {
    const int n = 200000;
    double s1 = 0, s2 = 0;
    for (int k = 0; k < n; ++k) {
      double x = rng.gamma(shape, rate);
      s1 += x;
      s2 += x * x;
    }
    double mean = s1 / n, var = s2 / n - mean * mean;
    EXPECT_NEAR(mean, shape / rate, 4 * std::sqrt(shape / (rate * rate) / n));
    EXPECT_NEAR(var, shape / (rate * rate), 0.03 * shape / (rate * rate));
  }
}

TEST(Rng, StreamsAreDistinct) {
  auto a = Rng::stream(1, {0, 0}), b = Rng::stream(1, {0, 1}), c = Rng::stream(1, {0, 0});
  auto x = a.next_u64();
  EXPECT_NE(x, b.next_u64());
  EXPECT_EQ(x, c.next_u64());
}
