#pragma once

// Discrete Besov norms on wavelet coefficients, weighted Sobolev quadrature,
// smoothness estimators, and the exact bound calculators.

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "besov/core.hpp"
#include "besov/geometry.hpp"
#include "besov/wavelet.hpp"

namespace besov {

//-----------------------------------------------------------------------------
// Adaptivity scale
//-----------------------------------------------------------------------------

inline double adaptivity_tau(double s, int d) {
  if (!(s > 0)) throw DomainError(concat("adaptivity_tau needs s > 0, got ", s));
  if (d < 2) throw DomainError(concat("adaptivity_tau needs d >= 2, got ", d));
  return 1.0 / (s / d + 0.5);
}

inline Rational adaptivity_tau(Rational s, int d) {
  if (s <= Rational(0)) throw DomainError("adaptivity_tau needs s > 0");
  if (d < 2) throw DomainError(concat("adaptivity_tau needs d >= 2, got ", d));
  return Rational(1) / (s / Rational(d) + Rational(1, 2));
}

/// Level weight exponent s + d(1/2 - 1/p); zero exactly on the adaptivity scale.
inline Rational level_weight_exponent(Rational s, Rational p, int d) {
  return s + Rational(d) * (Rational(1, 2) - Rational(1) / p);
}

//-----------------------------------------------------------------------------
// Discrete norms
//-----------------------------------------------------------------------------

/// (sum |x|^p)^{1/p} with compensated accumulation; sup norm for p = inf.
inline double lp_norm(std::span<const double> xs, double p) {
  if (std::isinf(p)) {
    double m = 0;
    for (double x : xs) m = std::max(m, std::abs(x));
    return m;
  }
  // Scale by the maximum to keep |x|^p representable for small p.
  double m = 0;
  for (double x : xs) m = std::max(m, std::abs(x));
  if (m == 0) return 0;
  NeumaierSum s;
  for (double x : xs) s += std::pow(std::abs(x) / m, p);
  return m * std::pow(s.value(), 1.0 / p);
}

struct BesovParams {
  double s = 1;
  double p = 2;
  double q = 2;
};

inline void check_besov_params(const BesovParams& bp, int d, int r) {
  if (!(bp.p > 0) || !(bp.q > 0)) throw DomainError("Besov exponents p and q must be positive");
  const double lower = std::max(0.0, d * (1.0 / bp.p - 1.0));
  if (!(bp.s > lower))
    throw DomainError(concat("Besov norm needs s > max{0, d(1/p - 1)} = ", lower, ", got s = ", bp.s));
  if (r >= 0 && !(r > bp.s))
    throw DomainError(concat("Besov norm needs basis order r > s; r = ", r, ", s = ", bp.s));
}

/// Scaling l_p term plus (sum_i sum_j 2^{j(s + d(1/2 - 1/p))q} ||c_{i,j,.}||_p^q)^{1/q}.
inline double discrete_besov_norm(const CoefficientField& c, const BesovParams& bp) {
  const int d = c.dim();
  check_besov_params(bp, d, c.basis_order());
  const double w = bp.s + d * (0.5 - 1.0 / bp.p);
  const auto sc = c.scaling_values();
  const double first = lp_norm(sc, bp.p);
  // Collect per-(i, j) block norms, then one weighted l_q sum.
  std::vector<double> blocks;
  for (int j = 0; j <= c.j_max(); ++j) {
    std::vector<std::vector<double>> by_type(static_cast<std::size_t>(c.types()));
    c.for_each([&](CoefficientKind kind, int i, int jj, const Shift&, double v) {
      if (kind == CoefficientKind::wavelet && jj == j) by_type[i - 1].push_back(v);
    });
    for (const auto& t : by_type) blocks.push_back(std::exp2(j * w) * lp_norm(t, bp.p));
  }
  return first + lp_norm(blocks, bp.q);
}

/// l_tau(scaling) + l_tau(wavelets): the level weight is one on the
/// adaptivity scale. tau = 2 is the s -> 0 end (plain l_2).
inline double adaptivity_scale_norm(const CoefficientField& c, double tau) {
  if (!(tau > 0 && tau <= 2)) throw DomainError(concat("adaptivity-scale norm needs tau in (0, 2], got ", tau));
  std::vector<double> wav;
  for (int j = 0; j <= c.j_max(); ++j) {
    const auto l = c.level_values(j);
    wav.insert(wav.end(), l.begin(), l.end());
  }
  return lp_norm(c.scaling_values(), tau) + lp_norm(wav, tau);
}

//-----------------------------------------------------------------------------
// Weighted Sobolev quadrature on gridded samples. Each sample inside Omega
// is the midpoint of a cell of volume h^d.
//-----------------------------------------------------------------------------

namespace detail {

class InteriorStencil {
 public:
  InteriorStencil(const GridField& f, const Domain& dom) : f_(f), inside_(static_cast<std::size_t>(f.size())) {
    for (std::int64_t n = 0; n < f.size(); ++n)
      inside_[n] = dom.contains(f.position(multi_index(n, f.extent, f.dim))) ? 1 : 0;
  }

  bool inside(const Shift& i) const {
    for (int a = 0; a < f_.dim; ++a)
      if (i[a] < 0 || i[a] >= f_.extent[a]) return false;
    return inside_[linear_index(i, f_.extent, f_.dim)] != 0;
  }
  bool inside(std::int64_t n) const { return inside_[n] != 0; }

  // First derivative along a of field g (same grid) at i.
  double first(const std::vector<double>& g, const Shift& i, int a) const {
    const double h = f_.spacing;
    Shift p = i, m = i;
    ++p[a];
    --m[a];
    const bool hp = inside(p), hm = inside(m);
    if (hp && hm) return (at(g, p) - at(g, m)) / (2 * h);
    if (hp) return (at(g, p) - at(g, i)) / h;
    if (hm) return (at(g, i) - at(g, m)) / h;
    throw DiscretizationError(concat("first difference along axis ", a, " has no stencil inside the domain"));
  }

  double second(const std::vector<double>& g, const Shift& i, int a) const {
    const double h2 = f_.spacing * f_.spacing;
    Shift p = i, m = i, pp = i, mm = i;
    ++p[a];
    --m[a];
    pp[a] += 2;
    mm[a] -= 2;
    if (inside(p) && inside(m)) return (at(g, p) - 2 * at(g, i) + at(g, m)) / h2;
    if (inside(p) && inside(pp)) return (at(g, i) - 2 * at(g, p) + at(g, pp)) / h2;
    if (inside(m) && inside(mm)) return (at(g, i) - 2 * at(g, m) + at(g, mm)) / h2;
    throw DiscretizationError(concat("second difference along axis ", a, " has no stencil inside the domain"));
  }

  double at(const std::vector<double>& g, const Shift& i) const { return g[linear_index(i, f_.extent, f_.dim)]; }

 private:
  const GridField& f_;
  std::vector<std::uint8_t> inside_;
};

}  // namespace detail

/// Pointwise |grad^m f| (Euclidean / Frobenius) at interior samples, NaN
/// outside Omega. m in {0, 1, 2}.
inline std::vector<double> derivative_magnitude(const GridField& f, const Domain& dom, int m) {
  if (m < 0 || m > 2) throw DomainError(concat("derivative order must be 0, 1 or 2, got ", m));
  if (f.dim != dom.dim()) throw ConsistencyError("field and domain dimensions differ");
  const int d = f.dim;
  detail::InteriorStencil st(f, dom);
  std::vector<double> out(static_cast<std::size_t>(f.size()), std::nan(""));
  std::vector<std::vector<double>> grad;
  if (m == 2) {
    grad.assign(static_cast<std::size_t>(d), std::vector<double>(static_cast<std::size_t>(f.size()), 0.0));
    for (std::int64_t n = 0; n < f.size(); ++n)
      if (st.inside(n))
        for (int a = 0; a < d; ++a) grad[a][n] = st.first(f.values, multi_index(n, f.extent, d), a);
  }
  for (std::int64_t n = 0; n < f.size(); ++n) {
    if (!st.inside(n)) continue;
    const Shift i = multi_index(n, f.extent, d);
    double s = 0;
    if (m == 0) {
      s = f.values[n] * f.values[n];
    } else if (m == 1) {
      for (int a = 0; a < d; ++a) s += std::pow(st.first(f.values, i, a), 2);
    } else {
      for (int a = 0; a < d; ++a) s += std::pow(st.second(f.values, i, a), 2);
      for (int a = 0; a < d; ++a)
        for (int b = a + 1; b < d; ++b) s += 2 * std::pow(st.first(grad[b], i, a), 2);
    }
    out[n] = std::sqrt(s);
  }
  return out;
}

/// Midpoint quadrature of rho^alpha |grad^m f|^p over Omega (alpha = 0 gives
/// the unweighted integral).
inline double weighted_derivative_integral(const GridField& f, const Domain& dom, int m, double alpha, double p) {
  const auto mag = derivative_magnitude(f, dom, m);
  const double vol = std::pow(f.spacing, f.dim);
  NeumaierSum s;
  for (std::int64_t n = 0; n < f.size(); ++n) {
    if (std::isnan(mag[n])) continue;
    const double w = alpha == 0 ? 1.0 : std::pow(signed_distance(dom, f.position(multi_index(n, f.extent, f.dim))), alpha);
    s += w * std::pow(mag[n], p) * vol;
  }
  return s.value();
}

/// (||f||_p^p + int rho^alpha |grad^m f|^p)^{1/p}.
inline double weighted_sobolev_norm(const GridField& f, const Domain& dom, int m, double alpha, double p) {
  if (!(alpha > 0)) throw DomainError(concat("weight exponent alpha must be positive, got ", alpha));
  if (!(p > 0)) throw DomainError("exponent p must be positive");
  const double base = weighted_derivative_integral(f, dom, 0, 0.0, p);
  const double top = m == 0 ? 0.0 : weighted_derivative_integral(f, dom, m, alpha, p);
  return std::pow(base + top, 1.0 / p);
}

//-----------------------------------------------------------------------------
// Regression helpers
//-----------------------------------------------------------------------------

struct LineFit {
  double slope = 0;
  double intercept = 0;
  double stderr_slope = 0;
  std::size_t points = 0;
};

inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) throw InsufficientData("line fit needs at least two points");
  NeumaierSum sx, sy;
  for (std::size_t i = 0; i < n; ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx.value() / n, my = sy.value() / n;
  NeumaierSum sxx, sxy;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx.value() == 0) throw InsufficientData("line fit abscissae are all equal");
  LineFit f;
  f.slope = sxy.value() / sxx.value();
  f.intercept = my - f.slope * mx;
  f.points = n;
  if (n > 2) {
    NeumaierSum rss;
    for (std::size_t i = 0; i < n; ++i) rss += std::pow(y[i] - f.intercept - f.slope * x[i], 2);
    f.stderr_slope = std::sqrt(rss.value() / (n - 2) / sxx.value());
  }
  return f;
}

//-----------------------------------------------------------------------------
// Smoothness estimators
//-----------------------------------------------------------------------------

struct SobolevEstimate {
  double s = 0;
  double stderr_slope = 0;
  int fit_lo = 0;  // first level in the fit
  int fit_hi = 0;  // last level in the fit
  std::vector<double> level_norms;
};

/// Optional fit window; unset ends default to all usable levels.
struct LevelWindow {
  std::optional<int> lo;
  std::optional<int> hi;
};

/// Fits log2 ||c_j||_2 = -s j + b over the window; an H^s field gives s.
inline SobolevEstimate estimate_sobolev_smoothness(const std::vector<double>& level_norms, LevelWindow w = {}) {
  const int levels = static_cast<int>(level_norms.size());
  const int populated = static_cast<int>(std::count_if(level_norms.begin(), level_norms.end(), [](double v) { return v > 0; }));
  if (populated < 4) throw InsufficientData(concat("insufficient data: ", populated, " populated levels, need 4"));
  SobolevEstimate e;
  e.level_norms = level_norms;
  e.fit_lo = std::clamp(w.lo.value_or(0), 0, levels - 1);
  e.fit_hi = std::clamp(w.hi.value_or(levels - 1), 0, levels - 1);
  std::vector<double> x, y;
  for (int j = e.fit_lo; j <= e.fit_hi; ++j)
    if (level_norms[j] > 0) {
      x.push_back(j);
      y.push_back(std::log2(level_norms[j]));
    }
  if (x.size() < 2) throw InsufficientData("insufficient data: fewer than two populated levels in the fit window");
  const auto fit = fit_line(x, y);
  e.s = -fit.slope;
  e.stderr_slope = fit.stderr_slope;
  return e;
}

inline std::vector<double> level_l2_norms(const CoefficientField& c) {
  std::vector<double> out;
  for (int j = 0; j <= c.j_max(); ++j) out.push_back(lp_norm(c.level_values(j), 2.0));
  return out;
}

inline SobolevEstimate estimate_sobolev_smoothness(const CoefficientField& c, LevelWindow w = {}) {
  return estimate_sobolev_smoothness(level_l2_norms(c), w);
}

struct AdaptivityEstimate {
  double s = 0;       // reported smoothness, clamped at the ceiling
  double tau = 0;     // (s/d + 1/2)^{-1}
  double raw_s = 0;   // unclamped regression value
  double stderr_slope = 0;
  std::int64_t fit_lo = 0;  // rank range of the fit (1-based, inclusive)
  std::int64_t fit_hi = 0;
  std::int64_t nonzero = 0;
  bool clamped = false;       // raw_s exceeded the basis ceiling r
  bool at_ceiling = false;    // super-algebraic decay (exact zeros in the tail)
};

struct RankWindow {
  double top_fraction = 0.01;  // leading ranks excluded from the fit
  double bottom_fraction = 0;  // trailing ranks excluded
};

inline constexpr std::int64_t kMinAdaptiveCoefficients = 100;

/// Fits log|c|_(n) against log n for the decreasingly sorted magnitudes.
/// A weak-l_tau sequence has slope -1/tau, whence s = d (1/tau - 1/2).
inline AdaptivityEstimate estimate_adaptivity_smoothness(std::vector<double> mags, int d, double ceiling,
                                                         RankWindow w = {}) {
  for (auto& v : mags) v = std::abs(v);
  std::sort(mags.begin(), mags.end(), std::greater<>());
  const auto total = static_cast<std::int64_t>(mags.size());
  const auto nz = static_cast<std::int64_t>(std::count_if(mags.begin(), mags.end(), [](double v) { return v > 0; }));
  if (nz < kMinAdaptiveCoefficients)
    throw InsufficientData(concat("insufficient data: ", nz, " nonzero coefficients, need ", kMinAdaptiveCoefficients));
  AdaptivityEstimate e;
  e.nonzero = nz;
  e.fit_lo = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(w.top_fraction * nz)));
  e.fit_hi = std::max<std::int64_t>(e.fit_lo + 1, nz - static_cast<std::int64_t>(std::floor(w.bottom_fraction * nz)));
  // Sample ranks evenly in log n so each decade weighs the same.
  std::vector<double> x, y;
  const int samples = 64;
  std::int64_t last = -1;
  for (int t = 0; t < samples; ++t) {
    const double ln = std::log(double(e.fit_lo)) +
                      (std::log(double(e.fit_hi)) - std::log(double(e.fit_lo))) * t / (samples - 1);
    const auto n = std::clamp<std::int64_t>(std::llround(std::exp(ln)), e.fit_lo, e.fit_hi);
    if (n == last) continue;
    last = n;
    x.push_back(std::log(double(n)));
    y.push_back(std::log(mags[n - 1]));
  }
  const auto fit = fit_line(x, y);
  e.stderr_slope = fit.stderr_slope;
  const double inv_tau = -fit.slope;
  e.raw_s = d * (inv_tau - 0.5);
  e.s = e.raw_s;
  if (total - nz > total / 100) {
    e.at_ceiling = true;
    e.s = ceiling;
  }
  if (e.s > ceiling) {
    e.clamped = true;
    e.s = ceiling;
  }
  e.tau = e.s > 0 ? adaptivity_tau(e.s, d) : 1.0 / (0.5 + e.s / d);
  return e;
}

/// All stored coefficients except the finest level (quadrature noise).
inline AdaptivityEstimate estimate_adaptivity_smoothness(const CoefficientField& c, RankWindow w = {},
                                                         bool drop_finest = true) {
  std::vector<double> v = c.scaling_values();
  const int last = drop_finest && c.j_max() > 0 ? c.j_max() - 1 : c.j_max();
  for (int j = 0; j <= last; ++j) {
    const auto l = c.level_values(j);
    v.insert(v.end(), l.begin(), l.end());
  }
  return estimate_adaptivity_smoothness(std::move(v), c.dim(), c.basis_order(), w);
}

//-----------------------------------------------------------------------------
// Exact bound calculators
//-----------------------------------------------------------------------------

struct StokesBounds {
  Rational s1_max;
  Rational s2_max;
};

inline StokesBounds stokes_regularity_bounds(int d) {
  if (d < 3) throw OutOfScopeError(concat("regularity bounds are stated for d >= 3, got d = ", d));
  const Rational ratio(d, d - 1);
  return {min(Rational(3, 2) * ratio, Rational(2)), Rational(1, 2) * ratio};
}

inline Rational embedding_smoothness_bound(Rational alpha0, Rational alpha, std::int64_t gamma, int d) {
  if (d < 3) throw OutOfScopeError(concat("embedding bound is stated for d >= 3, got d = ", d));
  if (alpha0 <= Rational(0)) throw DomainError("alpha0 must be positive");
  if (alpha <= Rational(0)) throw DomainError("alpha must be positive");
  if (gamma < 1) throw DomainError("gamma must be a positive integer");
  if (alpha >= Rational(2 * gamma))
    throw HypothesisError(concat("embedding needs alpha < 2 gamma; alpha = ", alpha, ", gamma = ", gamma));
  const Rational ratio(d, d - 1);
  return min(min((Rational(2 * gamma) - alpha) / Rational(2) * ratio, alpha0 * ratio), Rational(gamma));
}

struct OpenInterval {
  Rational lo;
  Rational hi;
};

/// Admissible smoothness t for the fixed-point argument; nullopt when empty.
inline std::optional<OpenInterval> admissible_range(int d, Rational eps, Rational p) {
  if (d < 3) throw OutOfScopeError(concat("admissible range is stated for d >= 3, got d = ", d));
  if (eps <= Rational(0) || eps > Rational(1)) throw DomainError(concat("epsilon must lie in (0, 1], got ", eps));
  const Rational pmin = d == 3 ? Rational(2) : Rational(d - 1);
  if (p <= pmin) throw DomainError(concat("p must exceed ", pmin, " for d = ", d, ", got ", p));
  const Rational dp = Rational(d) / p;
  Rational upper;
  if (d == 3) {
    upper = dp + eps;
  } else {
    const Rational gate(d - 3, 2 * (d - 1));
    if (eps <= gate)
      throw DomainTooRough(concat("domain too rough: epsilon = ", eps, " must exceed (d-3)/(2(d-1)) = ", gate));
    upper = dp + Rational(d - 1) * eps - Rational(d - 3, 2);
  }
  OpenInterval r{max(dp, Rational(1)), min(upper, Rational(1) + Rational(1) / p)};
  if (r.lo >= r.hi) return std::nullopt;
  return r;
}

//-----------------------------------------------------------------------------
// Report
//-----------------------------------------------------------------------------

struct RegularityReport {
  int dim = 3;
  SobolevEstimate sobolev;
  AdaptivityEstimate adaptive;
  std::optional<StokesBounds> bounds;
  std::optional<Rational> embed_max;
  std::uint64_t seed = 0;
};

inline nlohmann::ordered_json to_json(const RegularityReport& r) {
  nlohmann::ordered_json j;
  j["d"] = r.dim;
  j["seed"] = r.seed;
  j["s_sob"] = r.sobolev.s;
  j["s_adapt"] = r.adaptive.s;
  j["tau"] = r.adaptive.tau;
  j["fit_window"] = {{"sobolev_levels", {r.sobolev.fit_lo, r.sobolev.fit_hi}},
                     {"adaptive_ranks", {r.adaptive.fit_lo, r.adaptive.fit_hi}}};
  j["stderr"] = {{"sobolev", r.sobolev.stderr_slope}, {"adaptive", r.adaptive.stderr_slope}};
  j["s_adapt_raw"] = r.adaptive.raw_s;
  j["clamped"] = r.adaptive.clamped;
  j["at_ceiling"] = r.adaptive.at_ceiling;
  j["level_norms"] = r.sobolev.level_norms;
  nlohmann::ordered_json b;
  b["s1_max"] = r.bounds ? nlohmann::ordered_json(r.bounds->s1_max.to_double()) : nullptr;
  b["s2_max"] = r.bounds ? nlohmann::ordered_json(r.bounds->s2_max.to_double()) : nullptr;
  b["embed_max"] = r.embed_max ? nlohmann::ordered_json(r.embed_max->to_double()) : nullptr;
  j["bounds"] = b;
  return j;
}

/// Sorted magnitudes (n, |c|_(n)) for decay plots.
inline void write_decay_csv(std::ostream& os, std::vector<double> mags) {
  for (auto& v : mags) v = std::abs(v);
  std::sort(mags.begin(), mags.end(), std::greater<>());
  os.precision(17);
  os << "n,abs_c\n";
  for (std::size_t n = 0; n < mags.size(); ++n) os << n + 1 << ',' << mags[n] << '\n';
}

}  // namespace besov
