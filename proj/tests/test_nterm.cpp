#include <gtest/gtest.h>

#include <sstream>

#include "besov/nterm.hpp"
#include "oracles.hpp"

using namespace besov;

namespace {

std::vector<double> power_law(std::int64_t n, double exponent) {
  std::vector<double> c(static_cast<std::size_t>(n));
  for (std::int64_t k = 1; k <= n; ++k) c[k - 1] = std::pow(double(k), -exponent);
  return c;
}

template <class F>
RateFit rates_on_square(F&& f, int r, int J) {
  const auto dom = Domain::unit_square();
  const auto b = build_basis(2, r);
  const auto g = sample_extended(dom, analysis_box(dom, 1.0), J, f);
  return approximation_rates(analyze(g, b, J), build_index_sets(dom, b.support(), J));
}

}  // namespace

TEST(BestNTerm, Examples) {
  const std::vector<double> c{3, 1, 0.5};
  EXPECT_DOUBLE_EQ(best_nterm_error(c, 0), std::sqrt(10.25));
  EXPECT_DOUBLE_EQ(best_nterm_error(c, 1), std::sqrt(1.25));
  EXPECT_EQ(best_nterm_error(c, 3), 0.0);
  EXPECT_EQ(best_nterm_error(c, 7), 0.0);
  EXPECT_THROW(best_nterm_error(c, -1), DomainError);
}

TEST(BestNTerm, MatchesExhaustiveSearch) {
  Rng rng(12);
  for (int t = 0; t < 60; ++t) {
    const int count = 1 + static_cast<int>(rng.uniform(0, 12));
    std::vector<double> c(count);
    // dyadic values keep every partial sum exact
    for (auto& v : c) v = std::ldexp(std::round(rng.uniform(-64, 64)), -static_cast<int>(rng.uniform(0, 6)));
    if (t % 5 == 0) c.back() = c.front();  // ties
    for (int n = 0; n <= count; ++n) EXPECT_EQ(best_nterm_error(c, n), oracle::exhaustive_best_nterm(c, n));
  }
}

TEST(BestNTerm, NonincreasingAndFullNormAtZero) {
  Rng rng(3);
  std::vector<double> c(500);
  for (auto& v : c) v = rng.uniform(-1, 1) * std::pow(rng.uniform(), 3);
  const SortedTail t(c);
  EXPECT_NEAR(t.sigma(0), lp_norm(c, 2.0), 1e-14);
  for (std::int64_t n = 1; n <= t.count(); ++n) EXPECT_LE(t.sigma(n), t.sigma(n - 1));
}

TEST(BestNTerm, PerturbationStability) {
  Rng rng(6);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> c(200), e(200);
    const double delta = 1e-3;
    for (std::size_t k = 0; k < c.size(); ++k) {
      c[k] = rng.uniform(-1, 1);
      e[k] = c[k] + rng.uniform(-delta, delta);
    }
    for (std::int64_t n : {0, 5, 50, 199})
      EXPECT_LE(std::abs(best_nterm_error(c, n) - best_nterm_error(e, n)), delta * std::sqrt(200.0));
  }
}

TEST(Equivalence, ZerosAndFiniteSupport) {
  auto z = equivalence_sum(std::vector<double>(100, 0.0), 1.0, 2, 50);
  EXPECT_EQ(z.partial_sum, 0.0);
  EXPECT_TRUE(z.convergent);
  auto f = equivalence_sum({4, 2, 1}, 1.0, 2, 1000);
  EXPECT_TRUE(std::isfinite(f.partial_sum));
  EXPECT_TRUE(f.convergent);
  // brute force: only N = 1, 2 contribute
  const double tau = adaptivity_tau(1.0, 2);
  const double expect = std::pow(std::sqrt(5.0), tau) + std::pow(std::sqrt(2.0) * 1.0, tau) / 2;
  EXPECT_NEAR(f.partial_sum, expect, 1e-12);
}

TEST(Equivalence, PowerLawVerdicts) {
  for (double tau_star : {0.5, 1.0, 1.5}) {
    const int d = 2;
    const double s_star = d * (1 / tau_star - 0.5);
    // long sequence so truncation does not bend the tail at N_max
    const auto c = power_law(std::int64_t(1) << 22, 1 / tau_star);
    const auto lo = equivalence_sum(c, 0.5 * s_star, d, 50000);
    const auto hi = equivalence_sum(c, 1.5 * s_star, d, 50000);
    EXPECT_TRUE(lo.convergent) << tau_star << " slope " << lo.tail_slope;
    EXPECT_FALSE(hi.convergent) << tau_star << " slope " << hi.tail_slope;
    // the partial sum agrees with a direct brute-force loop
    const double tau = adaptivity_tau(0.5 * s_star, d);
    double direct = 0;
    for (std::int64_t n = 1; n <= 50; ++n) {
      double tail = 0;
      for (std::size_t k = n; k < c.size(); ++k) tail += c[k] * c[k];
      direct += std::pow(std::pow(double(n), 0.5 * s_star / d) * std::sqrt(tail), tau) / n;
    }
    EXPECT_NEAR(equivalence_sum(c, 0.5 * s_star, d, 50).partial_sum, direct, 1e-8 * direct);
  }
}

TEST(Equivalence, ConsistentWithAdaptivityEstimate) {
  const auto c = power_law(100000, 1.25);
  const auto est = estimate_adaptivity_smoothness(c, 2, 100.0);
  EXPECT_TRUE(equivalence_sum(c, 0.7 * est.s, 2, 25000).convergent);
  EXPECT_FALSE(equivalence_sum(c, 1.3 * est.s, 2, 25000).convergent);
}

TEST(Rates, PointSingularityFavoursAdaptive) {
  const auto r = rates_on_square([](const Point& x) { return std::pow(std::hypot(x[0] - 0.3, x[1] - 0.4), 0.4); }, 3, 6);
  EXPECT_GE(r.adaptive - r.uniform, 0.2);
  EXPECT_EQ(r.level_lo, 0);
  EXPECT_EQ(r.level_hi, 4);
}

TEST(Rates, SmoothFieldGivesComparableRates) {
  auto smooth = [](const Point& x) {
    return 1 + std::cos(M_PI * x[0]) * std::cos(2 * M_PI * x[1]) +
           std::exp(-40 * ((x[0] - 0.5) * (x[0] - 0.5) + (x[1] - 0.45) * (x[1] - 0.45)));
  };
  auto singular = [](const Point& x) { return std::pow(std::hypot(x[0] - 0.3, x[1] - 0.4), 0.4); };
  const auto a = rates_on_square(smooth, 2, 6);
  const auto b = rates_on_square(singular, 2, 6);
  EXPECT_LE(std::abs(a.adaptive - a.uniform), 0.15 * a.adaptive);
  EXPECT_LT(a.adaptive - a.uniform, 0.5 * (b.adaptive - b.uniform));
}

TEST(Rates, CurvesShareTheUniformCounts) {
  const auto r = rates_on_square([](const Point& x) { return std::sin(5 * x[0]) * x[1]; }, 2, 5);
  ASSERT_EQ(r.uniform_curve.points.size(), r.adaptive_curve.points.size());
  for (std::size_t k = 0; k < r.uniform_curve.points.size(); ++k) {
    EXPECT_EQ(r.uniform_curve.points[k].first, r.adaptive_curve.points[k].first);
    // best N-term never loses to any fixed N-subset
    EXPECT_LE(r.adaptive_curve.points[k].second, r.uniform_curve.points[k].second * (1 + 1e-12));
  }
}

TEST(Rates, Errors) {
  const auto dom = Domain::unit_square();
  const auto b = build_basis(2, 2);
  GridField zero(2, {-1, -1, 0}, 1.0 / 64, {3 * 64, 3 * 64, 1});
  EXPECT_THROW(approximation_rates(analyze(zero, b, 5), build_index_sets(dom, b.support(), 5)), InsufficientData);
  GridField shallow(2, {-1, -1, 0}, 1.0 / 8, {24, 24, 1});
  for (auto& v : shallow.values) v = 1;
  EXPECT_THROW(approximation_rates(analyze(shallow, b, 2), build_index_sets(dom, b.support(), 2)), InsufficientData);
}

TEST(Curves, CsvLayout) {
  ApproximationCurve u{"uniform", "coefficient-l2", 3, {{1, 0.5}, {3, 0}}};
  ApproximationCurve a{"adaptive", "coefficient-l2", 3, {{1, 0.25}}};
  std::ostringstream os;
  write_curves_csv(os, {u, a});
  EXPECT_EQ(os.str(), "N,sigma_N,scheme\n1,0.5,uniform\n3,0,uniform\n1,0.25,adaptive\n");
}
