#include <gtest/gtest.h>

#include <sstream>

#include "besov/wavelet.hpp"

using namespace besov;

namespace {

GridField random_field(int d, int J, Shift lo, Extent len, std::uint64_t seed) {
  Point o{0, 0, 0};
  Extent e{1, 1, 1};
  for (int a = 0; a < d; ++a) {
    o[a] = double(lo[a]);
    e[a] = len[a] << (J + 1);
  }
  GridField g(d, o, std::ldexp(1.0, -(J + 1)), e);
  Rng rng(seed);
  for (auto& v : g.values) v = rng.uniform(-1, 1);
  return g;
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0;
  for (std::size_t n = 0; n < a.size(); ++n) m = std::max(m, std::abs(a[n] - b[n]));
  return m;
}

double filter_dot(const Filter& a, const Filter& b, int shift) {
  double s = 0;
  for (int n = a.first; n <= a.last(); ++n) s += a.at(n) * b.at(n + shift);
  return s;
}

}  // namespace

TEST(Basis, TypeCounts) {
  EXPECT_EQ(build_basis(2, 2).types(), 3);
  EXPECT_EQ(build_basis(3, 2).types(), 7);
  EXPECT_EQ(WaveletBasis::type_label(5, 3), "HLH");
}

TEST(Basis, UnsupportedOrderListsAvailable) {
  try {
    build_basis(2, 9);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("1, 2, 3, 4, 5, 6"), std::string::npos);
  }
  EXPECT_THROW(build_basis(2, 0), ConfigError);
}

TEST(Basis, FilterBankIsBiorthogonal) {
  for (int r : available_orders()) {
    const auto fb = build_basis(2, r).filters();
    for (int k = -12; k <= 12; ++k) {
      const double delta = k == 0 ? 1.0 : 0.0;
      EXPECT_NEAR(filter_dot(fb.h, fb.ht, 2 * k), delta, 1e-11) << "r=" << r << " k=" << k;
      EXPECT_NEAR(filter_dot(fb.g, fb.gt, 2 * k), delta, 1e-11);
      EXPECT_NEAR(filter_dot(fb.h, fb.gt, 2 * k), 0.0, 1e-11);
      EXPECT_NEAR(filter_dot(fb.g, fb.ht, 2 * k), 0.0, 1e-11);
    }
  }
}

TEST(Basis, DualWaveletFilterMomentsVanish) {
  for (int r : available_orders()) {
    const auto b = build_basis(2, r);
    const auto& gt = b.filters().gt;
    const auto& g = b.filters().g;
    for (int alpha = 0; alpha <= r; ++alpha) {
      double m = 0, mp = 0, scale = 0;
      for (int n = gt.first; n <= gt.last(); ++n) m += std::pow(n, alpha) * gt.at(n);
      for (int n = g.first; n <= g.last(); ++n) {
        mp += std::pow(n, alpha) * g.at(n);
        scale += std::abs(std::pow(n, alpha) * g.at(n));
      }
      EXPECT_LT(std::abs(m), 1e-10) << "r=" << r << " alpha=" << alpha;
      EXPECT_LT(std::abs(mp), 1e-10 * std::max(1.0, scale)) << "r=" << r << " alpha=" << alpha;
    }
    EXPECT_GE(b.primal_order(), r);
    EXPECT_GE(b.dual_order(), r);
  }
}

TEST(Basis, SupportCoversAllGenerators) {
  for (int r : available_orders()) {
    const auto b = build_basis(3, r);
    const double L = b.support().half_width;
    for (const auto iv : {b.phi_support(), b.phit_support(), b.psi_support(), b.psit_support()}) {
      EXPECT_GE(iv.lo, -L);
      EXPECT_LE(iv.hi, L);
    }
  }
}

TEST(Transform, ZeroFieldGivesZeroCoefficients) {
  const auto b = build_basis(2, 3);
  GridField g(2, {0, 0, 0}, 1.0 / 16, {32, 32, 1});
  const auto c = analyze(g, b, 3);
  for (double v : c.all_values()) EXPECT_EQ(v, 0.0);
  const auto s = synthesize(c, b);
  for (double v : s.values) EXPECT_EQ(v, 0.0);
}

TEST(Transform, RoundTripAllOrders) {
  for (int d : {2, 3})
    for (int r : available_orders()) {
      const auto b = build_basis(d, r);
      const int J = d == 2 ? 3 : 1;
      const auto f = random_field(d, J, {-1, 0, 2}, {3, 2, 2}, 17 * r + d);
      const auto back = synthesize(analyze(f, b, J), b);
      EXPECT_LT(max_diff(back.values, f.values), 1e-10) << "d=" << d << " r=" << r;
    }
}

TEST(Transform, UnitCoefficientsAreReproduced) {
  const auto b = build_basis(2, 2);
  const int J = 2;
  CoefficientField proto(2, J, 2, {0, 0, 0}, {3, 3, 1});
  Rng rng(9);
  for (int t = 0; t < 30; ++t) {
    CoefficientField e = proto;
    const int j = static_cast<int>(rng.uniform(-1, J + 1));
    if (j < 0) {
      e.set_scaling({std::int64_t(rng.uniform(0, 3)), std::int64_t(rng.uniform(0, 3)), 0}, 1.0);
    } else {
      const auto n = std::int64_t(3 << j);
      e.set_wavelet(1 + int(rng.uniform(0, 3)), j, {std::int64_t(rng.uniform(0, n)), std::int64_t(rng.uniform(0, n)), 0},
                    1.0);
    }
    const auto back = analyze(synthesize(e, b), b, J);
    EXPECT_LT(max_diff(back.all_values(), e.all_values()), 1e-10);
  }
}

TEST(Transform, Linearity) {
  const auto b = build_basis(2, 4);
  const auto f = random_field(2, 3, {0, 0, 0}, {2, 2, 1}, 1);
  const auto g = random_field(2, 3, {0, 0, 0}, {2, 2, 1}, 2);
  GridField h = f;
  for (std::size_t n = 0; n < h.values.size(); ++n) h.values[n] = 2.5 * f.values[n] - 0.75 * g.values[n];
  const auto cf = analyze(f, b, 3).all_values(), cg = analyze(g, b, 3).all_values(), ch = analyze(h, b, 3).all_values();
  for (std::size_t n = 0; n < ch.size(); ++n) EXPECT_NEAR(ch[n], 2.5 * cf[n] - 0.75 * cg[n], 1e-12);
}

TEST(Transform, PolynomialsHaveVanishingInteriorDetails) {
  for (int r : {1, 2, 3, 4}) {
    const auto b = build_basis(2, r);
    const int J = 4;
    const Extent len{12, 12, 1};
    GridField g(2, {0, 0, 0}, std::ldexp(1.0, -(J + 1)), {len[0] << (J + 1), len[1] << (J + 1), 1});
    for (std::int64_t n = 0; n < g.size(); ++n) {
      const Point x = g.position(multi_index(n, g.extent, 2));
      // total degree r - 1 < r
      g.values[n] = 1 + std::pow(x[0] - 6, r - 1) - 0.5 * std::pow(x[1] - 5, std::max(0, r - 2)) * (x[0] - 6);
    }
    const auto c = analyze(g, b, J);
    const double L = b.support().half_width;
    double worst = 0;
    c.for_each([&](CoefficientKind kind, int, int j, const Shift& k, double v) {
      if (kind != CoefficientKind::wavelet) return;
      // far enough from the periodic seam: support of the dual wavelet plus
      // every coarser analysis stage stays inside the box
      const double s = std::ldexp(1.0, -j);
      for (int a = 0; a < 2; ++a)
        if ((k[a] - 2 * L) * s < 2 * L || (k[a] + 2 * L) * s > len[a] - 2 * L) return;
      worst = std::max(worst, std::abs(v));
    });
    EXPECT_LT(worst, 1e-8) << "r=" << r;
  }
}

TEST(Transform, ScalingFunctionImage) {
  const auto b = build_basis(2, 2);
  const int J = 4;
  CoefficientField c(2, J, 2, {-4, -4, 0}, {8, 8, 1});
  c.set_scaling({0, 0, 0}, 1.0);
  const auto s = synthesize(c, b);
  const auto iv = b.phi_support();
  double integral = 0;
  for (std::int64_t n = 0; n < s.size(); ++n) {
    const Point x = s.position(multi_index(n, s.extent, 2));
    integral += s.values[n] * s.spacing * s.spacing;
    if (x[0] < iv.lo || x[0] > iv.hi || x[1] < iv.lo || x[1] > iv.hi) EXPECT_EQ(s.values[n], 0.0);
  }
  EXPECT_NEAR(integral, 1.0, 1e-12);
  // tensor product structure
  auto at = [&](std::int64_t i, std::int64_t j) { return s.at({i, j, 0}); };
  for (std::int64_t i = 50; i < 80; i += 7)
    for (std::int64_t j = 52; j < 80; j += 5) EXPECT_NEAR(at(i, j) * at(j, i), at(i, i) * at(j, j), 1e-12);
}

TEST(Transform, VanishingMomentsOfPrimalWavelets) {
  for (int d : {2, 3})
    for (int r : {1, 2, 3}) {
      const auto b = build_basis(d, r);
      const auto B = static_cast<std::int64_t>(std::ceil(b.support().half_width)) + 1;
      const int J = d == 2 ? 3 : 1;
      for (int i = 1; i <= b.types(); ++i) {
        CoefficientField c(d, J, r, {-B, -B, -B}, {2 * B, 2 * B, 2 * B});
        c.set_wavelet(i, 0, {0, 0, 0}, 1.0);
        const auto s = synthesize(c, b);
        const double w = std::pow(s.spacing, d);
        const Extent pe{r + 1, r + 1, r + 1};
        for (std::int64_t m = 0; m < product(pe, d); ++m) {
          const Shift alpha = multi_index(m, pe, d);
          int total = 0;
          for (int a = 0; a < d; ++a) total += int(alpha[a]);
          if (total > r) continue;
          NeumaierSum q;
          for (std::int64_t n = 0; n < s.size(); ++n) {
            const Point x = s.position(multi_index(n, s.extent, d));
            double mono = 1;
            for (int a = 0; a < d; ++a) mono *= std::pow(x[a], double(alpha[a]));
            q += mono * s.values[n] * w;
          }
          EXPECT_LT(std::abs(q.value()), 1e-8) << "d=" << d << " r=" << r << " i=" << i;
        }
      }
    }
}

TEST(Transform, RieszBand) {
  // band measured once at a coarse depth, then checked at deeper ones
  for (int r : {2, 3, 5}) {
    const auto b = build_basis(2, r);
    Rng rng(21 + r);
    // only_level: -2 scaling block, -1 everything, j >= 0 that level alone
    auto ratios = [&](int J, int only_level) {
      std::vector<double> out;
      for (int t = 0; t < 16; ++t) {
        CoefficientField c(2, J, r, {0, 0, 0}, {4, 4, 1});
        if (only_level == -1 || only_level == -2)
          for (auto& v : c.scaling_block()) v = rng.uniform(-1, 1);
        for (int j = 0; j <= J; ++j)
          if (only_level == -1 || j == only_level)
            for (auto& v : c.level_block(j)) v = rng.uniform(-1, 1);
        const auto s = synthesize(c, b);
        double l2 = 0;
        for (double v : s.values) l2 += v * v * s.spacing * s.spacing;
        double cn = 0;
        for (double v : c.all_values()) cn += v * v;
        out.push_back(std::sqrt(l2 / cn));
      }
      return out;
    };
    std::vector<double> ref;
    for (int only : {-2, -1, 0, 1}) {
      const auto q = ratios(1, only);
      ref.insert(ref.end(), q.begin(), q.end());
    }
    const auto [lo, hi] = std::minmax_element(ref.begin(), ref.end());
    const double band_lo = *lo / 2, band_hi = *hi * 2;
    for (int J : {3, 5})
      for (int only : {-2, -1, 0, J}) {
        const auto qs = ratios(J, only);
        for (double q : qs) {
          EXPECT_GT(q, band_lo) << "r=" << r << " J=" << J;
          EXPECT_LT(q, band_hi) << "r=" << r << " J=" << J;
        }
      }
  }
}

TEST(Transform, Preconditions) {
  const auto b = build_basis(2, 2);
  GridField coarse(2, {0, 0, 0}, 0.25, {8, 8, 1});
  try {
    analyze(coarse, b, 3);
    FAIL();
  } catch (const PreconditionError& e) {
    EXPECT_NE(std::string(e.what()).find("resolution too coarse"), std::string::npos);
  }
  GridField shifted(2, {0.5, 0, 0}, 0.125, {8, 8, 1});
  EXPECT_THROW(analyze(shifted, b, 2), PreconditionError);
  GridField ragged(2, {0, 0, 0}, 0.125, {12, 8, 1});
  EXPECT_THROW(analyze(ragged, b, 2), PreconditionError);
  CoefficientField c(2, 2, 3, {0, 0, 0}, {1, 1, 1});
  EXPECT_THROW(synthesize(c, b), ConsistencyError);
  EXPECT_THROW(synthesize(c, build_basis(3, 3)), ConsistencyError);
}

TEST(Coefficients, RestrictionAndAbsentIndices) {
  const auto dom = Domain::l_shape();
  const auto b = build_basis(2, 2);
  const auto box = analysis_box(dom, 1.0);
  const int J = 3;
  const auto f = sample_extended(dom, box, J, [](const Point& x) { return std::sin(3 * x[0]) * x[1]; });
  const auto fam = build_index_sets(dom, b.support(), J);
  const auto full = analyze(f, b, J);
  const auto c = full.restricted(fam);
  // members centred outside the periodic box have no slot
  auto in_box = [&](int j, const Shift& k) {
    for (int a = 0; a < 2; ++a)
      if (k[a] < (c.box_lo()[a] << j) || k[a] >= ((c.box_lo()[a] + c.box_len()[a]) << j)) return false;
    return true;
  };
  std::int64_t expected = 0;
  for (const auto& k : fam.gamma()) expected += in_box(0, k);
  for (int j = 0; j <= J; ++j)
    for (const auto& k : fam.members(j)) expected += in_box(j, k) ? fam.types() : 0;
  for (int j = 0; j <= J; ++j)
    if (std::ldexp(b.support().half_width, -j) <= 1.0)
      for (const auto& k : fam.members(j)) EXPECT_TRUE(in_box(j, k));
  EXPECT_EQ(c.stored_count(), expected);
  c.for_each([&](CoefficientKind kind, int, int j, const Shift& k, double) {
    if (kind == CoefficientKind::scaling) EXPECT_TRUE(fam.in_gamma(k));
    else EXPECT_TRUE(fam.contains(j, k));
  });
  EXPECT_EQ(c.wavelet(1, 0, {1000, 0, 0}), 0.0);
  EXPECT_EQ(c.wavelet(9, 0, {0, 0, 0}), 0.0);
  for (int j = 0; j <= J; ++j)
    for (std::int64_t n = 0; n < c.level_size(j); ++n) {
      const Shift k = c.shift_of(j, n, c.level_extent(j));
      if (!fam.contains(j, k)) EXPECT_EQ(c.wavelet(2, j, k), 0.0);
    }
}

TEST(Coefficients, BinaryRoundTripIsBitExact) {
  const auto dom = Domain::l_shape();
  const auto b = build_basis(2, 3);
  const int J = 3;
  const auto f = sample_extended(dom, analysis_box(dom, 1.0), J, [](const Point& x) { return std::exp(x[0] - x[1]); });
  for (bool restrict : {false, true}) {
    auto c = analyze(f, b, J);
    if (restrict) c = c.restricted(build_index_sets(dom, b.support(), J));
    std::stringstream ss;
    write_coefficients_binary(ss, c);
    const auto back = read_coefficients_binary(ss);
    EXPECT_EQ(back.all_values(), c.all_values());
    EXPECT_EQ(back.is_restricted(), restrict);
    std::ostringstream a, z;
    write_coefficients_binary(a, back);
    std::stringstream again;
    write_coefficients_binary(again, c);
    EXPECT_EQ(a.str(), again.str());
  }
  std::stringstream bad("XXXX");
  EXPECT_THROW(read_coefficients_binary(bad), InputError);
}

TEST(Coefficients, CsvLayout) {
  CoefficientField c(2, 1, 2, {0, 0, 0}, {1, 1, 1});
  c.set_scaling({0, 0, 0}, 2.0);
  c.set_wavelet(3, 1, {1, 0, 0}, -0.5);
  std::ostringstream os;
  write_coefficients_csv(os, c);
  const auto s = os.str();
  EXPECT_EQ(s.substr(0, s.find('\n')), "kind,i,j,k0,k1,value");
  EXPECT_NE(s.find("scaling,0,0,0,0,2\n"), std::string::npos);
  EXPECT_NE(s.find("wavelet,3,1,1,0,-0.5\n"), std::string::npos);
}

TEST(Extension, EvenReflectionAndZero) {
  const auto sq = Domain::unit_square();
  const auto box = analysis_box(sq, 1.0);
  auto f = [](const Point& x) { return x[0] + 2 * x[1]; };
  const auto even = sample_extended(sq, box, 1, f);
  const auto zero = sample_extended(sq, box, 1, f, ExtensionRule::zero);
  for (std::int64_t n = 0; n < even.size(); ++n) {
    const Point x = even.position(multi_index(n, even.extent, 2));
    if (sq.contains_closed(x)) {
      EXPECT_EQ(even.values[n], f(x));
      EXPECT_EQ(zero.values[n], f(x));
    } else {
      EXPECT_EQ(zero.values[n], 0.0);
    }
  }
  // (-0.25, 0.5) mirrors to (0.25, 0.5)
  EXPECT_DOUBLE_EQ(even.at({3, 6, 0}), f({0.25, 0.5, 0}));
  EXPECT_THROW(parse_extension_rule("odd"), ConfigError);
}
