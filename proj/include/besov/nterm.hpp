#pragma once

// Best N-term errors in the coefficient l2 norm, uniform (level-by-level)
// truncation curves, rate fits and the adaptivity-scale equivalence sum.

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "besov/besov_analysis.hpp"
#include "besov/core.hpp"
#include "besov/geometry.hpp"
#include "besov/wavelet.hpp"

namespace besov {

/// sigma_N for every N in 0..n: tail[N] = l2 norm of all but the N largest.
class SortedTail {
 public:
  explicit SortedTail(std::vector<double> values) : mags_(std::move(values)) {
    for (auto& v : mags_) v = std::abs(v);
    std::sort(mags_.begin(), mags_.end(), std::greater<>());
    // Accumulate from the small end so tiny tails keep full precision.
    sq_.assign(mags_.size() + 1, 0.0);
    NeumaierSum s;
    for (std::size_t n = mags_.size(); n-- > 0;) {
      s += mags_[n] * mags_[n];
      sq_[n] = s.value();
    }
  }
  std::int64_t count() const { return static_cast<std::int64_t>(mags_.size()); }
  std::int64_t nonzero() const {
    return static_cast<std::int64_t>(std::count_if(mags_.begin(), mags_.end(), [](double v) { return v > 0; }));
  }
  double sigma(std::int64_t n) const {
    if (n < 0) throw DomainError("N must be nonnegative");
    if (n >= count()) return 0.0;
    return std::sqrt(sq_[static_cast<std::size_t>(n)]);
  }
  const std::vector<double>& sorted() const { return mags_; }

 private:
  std::vector<double> mags_;
  std::vector<double> sq_;
};

inline double best_nterm_error(const std::vector<double>& values, std::int64_t n) {
  return SortedTail(values).sigma(n);
}

inline double best_nterm_error(const CoefficientField& c, std::int64_t n) {
  return best_nterm_error(c.all_values(), n);
}

struct ApproximationCurve {
  std::string scheme;                             // uniform | adaptive
  std::string norm = "coefficient-l2";
  std::int64_t source_count = 0;
  std::vector<std::pair<std::int64_t, double>> points;  // (N, sigma_N)
};

/// Truncation after level j for j = -1 (scaling only) .. j_max - 1.
inline ApproximationCurve uniform_curve(const CoefficientField& c) {
  ApproximationCurve out;
  out.scheme = "uniform";
  std::vector<double> sq;
  std::vector<std::int64_t> counts;
  for (int j = 0; j <= c.j_max(); ++j) {
    const auto v = c.level_values(j);
    counts.push_back(static_cast<std::int64_t>(v.size()));
    const double n = lp_norm(v, 2.0);
    sq.push_back(n * n);
  }
  std::int64_t n = static_cast<std::int64_t>(c.scaling_values().size());
  out.source_count = n;
  for (auto k : counts) out.source_count += k;
  for (int j = -1; j < c.j_max(); ++j) {
    if (j >= 0) n += counts[j];
    NeumaierSum tail;
    for (int l = c.j_max(); l > j; --l) tail += sq[l];
    out.points.emplace_back(n, std::sqrt(tail.value()));
  }
  return out;
}

/// Best N-term errors sampled at the given N.
inline ApproximationCurve adaptive_curve(const std::vector<double>& values, const std::vector<std::int64_t>& ns) {
  ApproximationCurve out;
  out.scheme = "adaptive";
  const SortedTail t(values);
  out.source_count = t.count();
  for (auto n : ns) out.points.emplace_back(n, t.sigma(n));
  return out;
}

struct RateFit {
  double uniform = 0;   // -slope of log sigma vs log N, uniform truncation
  double adaptive = 0;  // same for best N-term at matching N
  double uniform_stderr = 0;
  double adaptive_stderr = 0;
  int level_lo = 0;
  int level_hi = 0;
  ApproximationCurve uniform_curve;
  ApproximationCurve adaptive_curve;
};

/// Rates over truncation levels [lo, hi]; defaults drop level -1 and the two
/// finest truncations, whose tails are cut off by j_max.
inline RateFit approximation_rates(const CoefficientField& coeffs, const IndexSetFamily& fam, LevelWindow w = {}) {
  const CoefficientField c = coeffs.is_restricted() ? coeffs : coeffs.restricted(fam);
  if (c.j_max() + 1 < 4) throw InsufficientData(concat("insufficient data: ", c.j_max() + 1, " levels, need 4"));
  const auto all = c.all_values();
  if (std::none_of(all.begin(), all.end(), [](double v) { return v != 0; }))
    throw InsufficientData("insufficient data: all coefficients are zero");
  RateFit r;
  r.uniform_curve = uniform_curve(c);
  std::vector<std::int64_t> ns;
  for (const auto& p : r.uniform_curve.points) ns.push_back(p.first);
  r.adaptive_curve = adaptive_curve(all, ns);
  r.level_lo = w.lo.value_or(0);
  r.level_hi = w.hi.value_or(c.j_max() - 2);
  auto fit = [&](const ApproximationCurve& cv, double& rate, double& se) {
    std::vector<double> x, y;
    for (int j = r.level_lo; j <= r.level_hi; ++j) {
      const auto& p = cv.points.at(static_cast<std::size_t>(j + 1));
      if (p.second > 0) {
        x.push_back(std::log(double(p.first)));
        y.push_back(std::log(p.second));
      }
    }
    if (x.size() < 2) throw InsufficientData("insufficient data: fewer than two positive errors in the rate window");
    const auto f = fit_line(x, y);
    rate = -f.slope;
    se = f.stderr_slope;
  };
  fit(r.uniform_curve, r.uniform, r.uniform_stderr);
  fit(r.adaptive_curve, r.adaptive, r.adaptive_stderr);
  return r;
}

struct EquivalenceSum {
  double partial_sum = 0;
  double tau = 0;
  double tail_slope = 0;  // slope of log (N^{s/d} sigma_N)^tau vs log N
  bool convergent = true;
};

/// Partial sum of [N^{s/d} sigma_N]^tau / N for N = 1..N_max. The verdict
/// fits the summand times N over the last decade and a half: a nonnegative
/// slope means the terms decay no faster than 1/N.
inline EquivalenceSum equivalence_sum(const std::vector<double>& values, double s, int d, std::int64_t n_max) {
  EquivalenceSum e;
  e.tau = adaptivity_tau(s, d);
  const SortedTail t(values);
  NeumaierSum sum;
  for (std::int64_t n = 1; n <= n_max; ++n) {
    const double sig = t.sigma(n);
    if (sig == 0) break;
    sum += std::pow(std::pow(double(n), s / d) * sig, e.tau) / double(n);
  }
  e.partial_sum = sum.value();
  std::vector<double> x, y;
  const double lo = std::max(1.0, double(n_max) / 32.0);
  std::int64_t last = 0;
  for (int k = 0; k < 32; ++k) {
    const auto n = static_cast<std::int64_t>(std::llround(lo * std::pow(double(n_max) / lo, k / 31.0)));
    if (n == last) continue;
    last = n;
    const double sig = t.sigma(n);
    if (sig <= 0) continue;
    x.push_back(std::log(double(n)));
    y.push_back(e.tau * (s / d * std::log(double(n)) + std::log(sig)));
  }
  if (x.size() < 2) {
    e.convergent = true;  // sigma vanishes: finitely many terms
    return e;
  }
  e.tail_slope = fit_line(x, y).slope;
  e.convergent = e.tail_slope < 0;
  return e;
}

inline void write_curves_csv(std::ostream& os, const std::vector<ApproximationCurve>& curves) {
  os.precision(17);
  os << "N,sigma_N,scheme\n";
  for (const auto& c : curves)
    for (const auto& [n, s] : c.points) os << n << ',' << s << ',' << c.scheme << '\n';
}

}  // namespace besov
