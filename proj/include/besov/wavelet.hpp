#pragma once

// Compactly supported biorthogonal spline wavelets (Cohen-Daubechies-Feauveau
// family) in tensor-product form, with a periodized cascade over an integer
// analysis box. Level 0 has unit spacing; samples live at level j_max + 1.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "besov/core.hpp"
#include "besov/geometry.hpp"

namespace besov {

/// Finite filter with taps at indices first, first+1, ...
struct Filter {
  std::vector<double> taps;
  int first = 0;

  int last() const { return first + static_cast<int>(taps.size()) - 1; }
  double at(int n) const { return (n < first || n > last()) ? 0.0 : taps[n - first]; }
};

/// Closed interval [lo, hi] supporting a 1D generator.
struct Interval {
  double lo = 0;
  double hi = 0;
};

struct FilterBank {
  Filter h;   // primal scaling (synthesis lowpass)
  Filter ht;  // dual scaling (analysis lowpass)
  Filter g;   // primal wavelet (synthesis highpass)
  Filter gt;  // dual wavelet (analysis highpass)
};

class WaveletBasis {
 public:
  int dim() const { return dim_; }
  /// Smoothness order r the basis was requested for.
  int order() const { return order_; }
  /// Primal B-spline order N (phi is C^{N-2}); psi~ has N vanishing moments.
  int primal_order() const { return primal_order_; }
  /// Dual order N~; psi has N~ vanishing moments.
  int dual_order() const { return dual_order_; }
  int types() const { return (1 << dim_) - 1; }
  const FilterBank& filters() const { return bank_; }
  const SupportCube& support() const { return support_; }

  Interval phi_support() const { return support_of(bank_.h); }
  Interval phit_support() const { return support_of(bank_.ht); }
  Interval psi_support() const { return wavelet_support(bank_.g, bank_.h); }
  Interval psit_support() const { return wavelet_support(bank_.gt, bank_.ht); }

  /// Type i in 1..2^d-1; bit a set means the wavelet factor along axis a.
  static std::string type_label(int i, int d) {
    std::string s;
    for (int a = 0; a < d; ++a) s += (i & (1 << a)) ? 'H' : 'L';
    return s;
  }

 private:
  friend WaveletBasis build_basis(int d, int r);

  static Interval support_of(const Filter& f) { return {double(f.first), double(f.last())}; }
  static Interval wavelet_support(const Filter& w, const Filter& scaling) {
    return {(w.first + scaling.first) / 2.0, (w.last() + scaling.last()) / 2.0};
  }

  int dim_ = 2;
  int order_ = 2;
  int primal_order_ = 4;
  int dual_order_ = 4;
  FilterBank bank_;
  SupportCube support_;
};

inline std::vector<int> available_orders() { return {1, 2, 3, 4, 5, 6}; }

namespace detail {

// Laurent polynomial as coefficient vector with lowest power `first`.
inline Filter convolve(const Filter& a, const Filter& b) {
  Filter c;
  c.first = a.first + b.first;
  c.taps.assign(a.taps.size() + b.taps.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.taps.size(); ++i)
    for (std::size_t j = 0; j < b.taps.size(); ++j) c.taps[i + j] += a.taps[i] * b.taps[j];
  return c;
}

inline double binomial(int n, int k) {
  double r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// sqrt(2) * ((1 + z) / 2)^n z^{-n/2}, n even.
inline Filter spline_factor(int n) {
  Filter f;
  f.first = -n / 2;
  for (int k = 0; k <= n; ++k) f.taps.push_back(std::sqrt(2.0) * binomial(n, k) / std::ldexp(1.0, n));
  return f;
}

inline Filter cdf_dual_lowpass(int n, int nt) {
  const int K = (n + nt) / 2;
  // y = (2 - z - z^{-1}) / 4
  const Filter y{{-0.25, 0.5, -0.25}, -1};
  Filter poly{{0.0}, 0};
  Filter ypow{{1.0}, 0};
  for (int k = 0; k < K; ++k) {
    const double c = binomial(K - 1 + k, k);
    // poly += c * ypow, aligning offsets.
    const int lo = std::min(poly.first, ypow.first);
    const int hi = std::max(poly.last(), ypow.last());
    Filter sum;
    sum.first = lo;
    sum.taps.assign(static_cast<std::size_t>(hi - lo + 1), 0.0);
    for (int i = lo; i <= hi; ++i) sum.taps[i - lo] = poly.at(i) + c * ypow.at(i);
    poly = sum;
    ypow = convolve(ypow, y);
  }
  return convolve(spline_factor(nt), poly);
}

// Quadrature-mirror partner: out[n] = (-1)^n in[1 - n].
inline Filter mirror(const Filter& in) {
  Filter out;
  out.first = 1 - in.last();
  for (int n = out.first; n <= 1 - in.first; ++n) out.taps.push_back(((n % 2 == 0) ? 1.0 : -1.0) * in.at(1 - n));
  return out;
}

}  // namespace detail

/// Biorthogonal spline basis CDF(N, N~) with N the smallest even integer
/// >= r + 2, so phi is C^r; both wavelets have more than r vanishing moments.
inline WaveletBasis build_basis(int d, int r) {
  const auto orders = available_orders();
  if (std::find(orders.begin(), orders.end(), r) == orders.end()) {
    std::string list;
    for (int o : orders) list += (list.empty() ? "" : ", ") + std::to_string(o);
    throw ConfigError(concat("unsupported smoothness order r=", r, "; available orders: ", list));
  }
  check_dimension(d);
  WaveletBasis b;
  b.dim_ = d;
  b.order_ = r;
  b.primal_order_ = (r + 2) % 2 == 0 ? r + 2 : r + 3;
  // Equal orders leave the dual cascade unbounded for N >= 6; these are the
  // smallest even dual orders whose analysis cascade stays L2-stable.
  b.dual_order_ = b.primal_order_ == 4 ? 6 : b.primal_order_ == 6 ? 10 : 16;
  b.bank_.h = detail::spline_factor(b.primal_order_);
  b.bank_.ht = detail::cdf_dual_lowpass(b.primal_order_, b.dual_order_);
  b.bank_.g = detail::mirror(b.bank_.ht);
  b.bank_.gt = detail::mirror(b.bank_.h);
  double half = 0;
  for (const Interval iv : {b.phi_support(), b.phit_support(), b.psi_support(), b.psit_support()})
    half = std::max({half, std::abs(iv.lo), std::abs(iv.hi)});
  b.support_ = SupportCube{d, half};
  return b;
}

//-----------------------------------------------------------------------------
// Coefficient storage
//-----------------------------------------------------------------------------

enum class CoefficientKind { scaling, wavelet };

/// Scaling coefficients at level 0 and wavelet coefficients for levels
/// 0..j_max over the integer analysis box [box_lo, box_lo + box_len).
/// Optional membership masks restrict the stored set to Gamma and Lambda;
/// absent indices read as exact zero.
class CoefficientField {
 public:
  CoefficientField() = default;
  CoefficientField(int d, int j_max, int basis_order, Shift box_lo, Extent box_len)
      : dim_(d), j_max_(j_max), basis_order_(basis_order), box_lo_(box_lo), box_len_(box_len) {
    for (int a = d; a < kMaxDim; ++a) {
      box_lo_[a] = 0;
      box_len_[a] = 1;
    }
    scaling_.assign(static_cast<std::size_t>(product(level_extent(0), d)), 0.0);
    for (int j = 0; j <= j_max; ++j)
      details_.emplace_back(static_cast<std::size_t>(types() * product(level_extent(j), d)), 0.0);
  }

  int dim() const { return dim_; }
  int j_max() const { return j_max_; }
  int basis_order() const { return basis_order_; }
  int types() const { return (1 << dim_) - 1; }
  const Shift& box_lo() const { return box_lo_; }
  const Extent& box_len() const { return box_len_; }
  bool is_restricted() const { return !scaling_mask_.empty(); }

  Extent level_extent(int j) const {
    Extent e{1, 1, 1};
    for (int a = 0; a < dim_; ++a) e[a] = box_len_[a] << j;
    return e;
  }
  std::int64_t level_size(int j) const { return product(level_extent(j), dim_); }

  double scaling(const Shift& k) const {
    const auto idx = local_index(0, k);
    if (idx < 0 || !scaling_present(idx)) return 0.0;
    return scaling_[idx];
  }
  double wavelet(int i, int j, const Shift& k) const {
    if (i < 1 || i > types() || j < 0 || j > j_max_) return 0.0;
    const auto idx = local_index(j, k);
    if (idx < 0 || !level_present(j, idx)) return 0.0;
    return details_[j][(i - 1) * level_size(j) + idx];
  }
  void set_scaling(const Shift& k, double v) {
    const auto idx = local_index(0, k);
    if (idx < 0) throw DomainError("scaling index outside the analysis box");
    scaling_[idx] = v;
  }
  void set_wavelet(int i, int j, const Shift& k, double v) {
    const auto idx = local_index(j, k);
    if (idx < 0 || i < 1 || i > types() || j < 0 || j > j_max_)
      throw DomainError("wavelet index outside the analysis box");
    details_[j][(i - 1) * level_size(j) + idx] = v;
  }

  /// Raw dense blocks (stored and masked entries alike), for the transforms.
  std::vector<double>& scaling_block() { return scaling_; }
  const std::vector<double>& scaling_block() const { return scaling_; }
  std::vector<double>& level_block(int j) { return details_.at(j); }
  const std::vector<double>& level_block(int j) const { return details_.at(j); }

  /// Visits stored coefficients: scaling first, then levels 0..j_max, types
  /// ascending, shifts in lexicographic order (axis 0 fastest).
  template <typename F>
  void for_each(F&& f) const {
    const Extent e0 = level_extent(0);
    for (std::int64_t n = 0; n < level_size(0); ++n)
      if (scaling_present(n)) f(CoefficientKind::scaling, 0, 0, shift_of(0, n, e0), scaling_[n]);
    for (int j = 0; j <= j_max_; ++j) {
      const Extent e = level_extent(j);
      const auto sz = level_size(j);
      for (int i = 1; i <= types(); ++i)
        for (std::int64_t n = 0; n < sz; ++n)
          if (level_present(j, n)) f(CoefficientKind::wavelet, i, j, shift_of(j, n, e), details_[j][(i - 1) * sz + n]);
    }
  }

  std::vector<double> scaling_values() const {
    std::vector<double> v;
    for (std::int64_t n = 0; n < level_size(0); ++n)
      if (scaling_present(n)) v.push_back(scaling_[n]);
    return v;
  }
  /// Stored wavelet coefficients of level j (all types).
  std::vector<double> level_values(int j) const {
    std::vector<double> v;
    const auto sz = level_size(j);
    for (int i = 1; i <= types(); ++i)
      for (std::int64_t n = 0; n < sz; ++n)
        if (level_present(j, n)) v.push_back(details_[j][(i - 1) * sz + n]);
    return v;
  }
  std::vector<double> all_values() const {
    std::vector<double> v = scaling_values();
    for (int j = 0; j <= j_max_; ++j) {
      const auto l = level_values(j);
      v.insert(v.end(), l.begin(), l.end());
    }
    return v;
  }
  std::int64_t stored_count() const {
    std::int64_t n = 0;
    for_each([&](auto, int, int, const Shift&, double) { ++n; });
    return n;
  }

  /// Copy keeping only Gamma (scaling) and Lambda (wavelets).
  CoefficientField restricted(const IndexSetFamily& fam) const {
    if (fam.dim() != dim_) throw ConsistencyError("index family dimension differs from the coefficients");
    if (fam.j_max() < j_max_) throw ConsistencyError("index family has fewer levels than the coefficients");
    CoefficientField out = *this;
    out.scaling_mask_.assign(static_cast<std::size_t>(level_size(0)), 0);
    for (std::int64_t n = 0; n < level_size(0); ++n) {
      const Shift k = shift_of(0, n, level_extent(0));
      out.scaling_mask_[n] = (scaling_present(n) && fam.in_gamma(k)) ? 1 : 0;
      if (!out.scaling_mask_[n]) out.scaling_[n] = 0.0;
    }
    out.level_mask_.assign(static_cast<std::size_t>(j_max_ + 1), {});
    for (int j = 0; j <= j_max_; ++j) {
      const auto sz = level_size(j);
      auto& mask = out.level_mask_[j];
      mask.assign(static_cast<std::size_t>(sz), 0);
      for (std::int64_t n = 0; n < sz; ++n) {
        mask[n] = (level_present(j, n) && fam.contains(j, shift_of(j, n, level_extent(j)))) ? 1 : 0;
        if (!mask[n])
          for (int i = 1; i <= types(); ++i) out.details_[j][(i - 1) * sz + n] = 0.0;
      }
    }
    return out;
  }

  const std::vector<std::uint8_t>& scaling_mask() const { return scaling_mask_; }
  const std::vector<std::uint8_t>& level_mask(int j) const { return level_mask_.at(j); }
  void set_masks(std::vector<std::uint8_t> scaling, std::vector<std::vector<std::uint8_t>> levels) {
    scaling_mask_ = std::move(scaling);
    level_mask_ = std::move(levels);
  }

  Shift shift_of(int j, std::int64_t n, const Extent& e) const {
    Shift k = multi_index(n, e, dim_);
    for (int a = 0; a < dim_; ++a) k[a] += box_lo_[a] << j;
    return k;
  }

 private:
  std::int64_t local_index(int j, const Shift& k) const {
    Shift q{0, 0, 0};
    const Extent e = level_extent(j);
    for (int a = 0; a < dim_; ++a) {
      q[a] = k[a] - (box_lo_[a] << j);
      if (q[a] < 0 || q[a] >= e[a]) return -1;
    }
    return linear_index(q, e, dim_);
  }
  bool scaling_present(std::int64_t n) const { return scaling_mask_.empty() || scaling_mask_[n]; }
  bool level_present(int j, std::int64_t n) const { return level_mask_.empty() || level_mask_[j][n]; }

  int dim_ = 2;
  int j_max_ = 0;
  int basis_order_ = 0;
  Shift box_lo_{0, 0, 0};
  Extent box_len_{1, 1, 1};
  std::vector<double> scaling_;
  std::vector<std::vector<double>> details_;
  std::vector<std::uint8_t> scaling_mask_;
  std::vector<std::vector<std::uint8_t>> level_mask_;
};

//-----------------------------------------------------------------------------
// Periodized cascade
//-----------------------------------------------------------------------------

namespace detail {

inline std::int64_t wrap(std::int64_t n, std::int64_t m) {
  n %= m;
  return n < 0 ? n + m : n;
}

// Visits every 1D line along `axis` of a block with extent `e`.
template <typename F>
void for_each_line(const Extent& e, int d, int axis, F&& f) {
  Extent rest = e;
  rest[axis] = 1;
  std::int64_t stride = 1;
  for (int a = 0; a < axis; ++a) stride *= e[a];
  for (std::int64_t n = 0; n < product(rest, d); ++n) {
    const Shift i = multi_index(n, rest, d);
    f(linear_index(i, e, d), stride);
  }
}

// One analysis step along `axis`: low half followed by high half.
inline void analyze_axis(std::vector<double>& block, const Extent& e, int d, int axis, const FilterBank& fb) {
  const std::int64_t m = e[axis], half = m / 2;
  std::vector<double> line(static_cast<std::size_t>(m)), out(static_cast<std::size_t>(m));
  for_each_line(e, d, axis, [&](std::int64_t base, std::int64_t stride) {
    for (std::int64_t n = 0; n < m; ++n) line[n] = block[base + n * stride];
    for (std::int64_t k = 0; k < half; ++k) {
      double lo = 0, hi = 0;
      for (int t = fb.ht.first; t <= fb.ht.last(); ++t) lo += fb.ht.at(t) * line[wrap(2 * k + t, m)];
      for (int t = fb.gt.first; t <= fb.gt.last(); ++t) hi += fb.gt.at(t) * line[wrap(2 * k + t, m)];
      out[k] = lo;
      out[half + k] = hi;
    }
    for (std::int64_t n = 0; n < m; ++n) block[base + n * stride] = out[n];
  });
}

inline void synthesize_axis(std::vector<double>& block, const Extent& e, int d, int axis, const FilterBank& fb) {
  const std::int64_t m = e[axis], half = m / 2;
  std::vector<double> line(static_cast<std::size_t>(m)), out(static_cast<std::size_t>(m));
  for_each_line(e, d, axis, [&](std::int64_t base, std::int64_t stride) {
    for (std::int64_t n = 0; n < m; ++n) line[n] = block[base + n * stride];
    std::fill(out.begin(), out.end(), 0.0);
    for (std::int64_t k = 0; k < half; ++k) {
      const double lo = line[k], hi = line[half + k];
      for (int t = fb.h.first; t <= fb.h.last(); ++t) out[wrap(2 * k + t, m)] += fb.h.at(t) * lo;
      for (int t = fb.g.first; t <= fb.g.last(); ++t) out[wrap(2 * k + t, m)] += fb.g.at(t) * hi;
    }
    for (std::int64_t n = 0; n < m; ++n) block[base + n * stride] = out[n];
  });
}

// Copies subband `band` (bitmask of high halves) between a block of extent
// e and a dense array of extent e/2.
inline void move_subband(std::vector<double>& block, const Extent& e, int d, int band, double* sub, bool to_sub) {
  Extent he = e;
  for (int a = 0; a < d; ++a) he[a] = e[a] / 2;
  for (std::int64_t n = 0; n < product(he, d); ++n) {
    Shift i = multi_index(n, he, d);
    for (int a = 0; a < d; ++a)
      if (band & (1 << a)) i[a] += he[a];
    const auto idx = linear_index(i, e, d);
    if (to_sub)
      sub[n] = block[idx];
    else
      block[idx] = sub[n];
  }
}

}  // namespace detail

inline double sample_scale(int d, int j_max) { return std::ldexp(1.0, -d * (j_max + 1)); }

/// Coefficients of levels 0..j_max from point samples at spacing
/// 2^{-(j_max+1)} over an integer box (periodized filters).
inline CoefficientField analyze(const GridField& samples, const WaveletBasis& basis, int j_max) {
  const int d = samples.dim;
  if (d != basis.dim()) throw ConsistencyError("sample dimension differs from the basis dimension");
  if (j_max < 0) throw DomainError("j_max must be nonnegative");
  const double required = std::ldexp(1.0, -(j_max + 1));
  if (samples.spacing > required)
    throw PreconditionError(concat("resolution too coarse: j_max=", j_max, " needs sample spacing ", required,
                                   " (", std::ldexp(1.0, j_max + 1), " samples per unit), got ", samples.spacing));
  if (samples.spacing != required)
    throw PreconditionError(concat("sample spacing must equal 2^-(j_max+1) = ", required, ", got ", samples.spacing));
  Shift box_lo{0, 0, 0};
  Extent box_len{1, 1, 1};
  for (int a = 0; a < d; ++a) {
    if (samples.origin[a] != std::floor(samples.origin[a]))
      throw PreconditionError("sample origin must lie on the integer lattice");
    if (samples.extent[a] % (std::int64_t{1} << (j_max + 1)) != 0 || samples.extent[a] == 0)
      throw PreconditionError(concat("samples along axis ", a, " must be a positive multiple of ",
                                     std::int64_t{1} << (j_max + 1)));
    box_lo[a] = static_cast<std::int64_t>(samples.origin[a]);
    box_len[a] = samples.extent[a] >> (j_max + 1);
  }
  CoefficientField out(d, j_max, basis.order(), box_lo, box_len);
  const double scale = std::sqrt(sample_scale(d, j_max));
  std::vector<double> block(samples.values.size());
  for (std::size_t n = 0; n < block.size(); ++n) block[n] = samples.values[n] * scale;
  const auto& fb = basis.filters();
  for (int j = j_max; j >= 0; --j) {
    const Extent e = out.level_extent(j + 1);
    for (int a = 0; a < d; ++a) detail::analyze_axis(block, e, d, a, fb);
    const auto sz = out.level_size(j);
    auto& lv = out.level_block(j);
    for (int i = 1; i <= out.types(); ++i) detail::move_subband(block, e, d, i, lv.data() + (i - 1) * sz, true);
    std::vector<double> low(static_cast<std::size_t>(sz));
    detail::move_subband(block, e, d, 0, low.data(), true);
    block = std::move(low);
  }
  out.scaling_block() = std::move(block);
  return out;
}

/// Inverse cascade; masked (absent) coefficients contribute zero.
inline GridField synthesize(const CoefficientField& coeffs, const WaveletBasis& basis) {
  const int d = coeffs.dim();
  if (d != basis.dim()) throw ConsistencyError("coefficient dimension differs from the basis dimension");
  if (coeffs.basis_order() != basis.order())
    throw ConsistencyError(concat("coefficients were computed with order ", coeffs.basis_order(),
                                  ", basis has order ", basis.order()));
  const int j_max = coeffs.j_max();
  std::vector<double> block(static_cast<std::size_t>(coeffs.level_size(0)));
  coeffs.for_each([&](CoefficientKind kind, int, int, const Shift& k, double v) {
    if (kind != CoefficientKind::scaling) return;
    Shift q{0, 0, 0};
    for (int a = 0; a < d; ++a) q[a] = k[a] - coeffs.box_lo()[a];
    block[linear_index(q, coeffs.level_extent(0), d)] = v;
  });
  const auto& fb = basis.filters();
  for (int j = 0; j <= j_max; ++j) {
    const Extent e = coeffs.level_extent(j + 1);
    std::vector<double> next(static_cast<std::size_t>(product(e, d)), 0.0);
    detail::move_subband(next, e, d, 0, block.data(), false);
    const auto sz = coeffs.level_size(j);
    std::vector<double> sub(static_cast<std::size_t>(sz));
    for (int i = 1; i <= coeffs.types(); ++i) {
      for (std::int64_t n = 0; n < sz; ++n) sub[n] = coeffs.wavelet(i, j, coeffs.shift_of(j, n, coeffs.level_extent(j)));
      detail::move_subband(next, e, d, i, sub.data(), false);
    }
    for (int a = d - 1; a >= 0; --a) detail::synthesize_axis(next, e, d, a, fb);
    block = std::move(next);
  }
  Point origin{0, 0, 0};
  Extent ext{1, 1, 1};
  for (int a = 0; a < d; ++a) {
    origin[a] = static_cast<double>(coeffs.box_lo()[a]);
    ext[a] = coeffs.box_len()[a] << (j_max + 1);
  }
  GridField out(d, origin, std::ldexp(1.0, -(j_max + 1)), ext);
  const double scale = 1.0 / std::sqrt(sample_scale(d, j_max));
  for (std::size_t n = 0; n < block.size(); ++n) out.values[n] = block[n] * scale;
  return out;
}

//-----------------------------------------------------------------------------
// Extension of functions on Omega to the analysis box
//-----------------------------------------------------------------------------

enum class ExtensionRule { even_reflection, zero };

inline ExtensionRule parse_extension_rule(const std::string& s) {
  if (s == "even" || s == "even_reflection" || s == "reflect") return ExtensionRule::even_reflection;
  if (s == "zero") return ExtensionRule::zero;
  throw ConfigError(concat("unknown extension rule '", s, "' (expected even or zero)"));
}

/// Integer box [lo, lo + len) covering the domain plus `pad` units per side.
struct AnalysisBox {
  Shift lo{0, 0, 0};
  Extent len{1, 1, 1};
};

inline AnalysisBox analysis_box(const Domain& dom, double pad) {
  const Box bb = dom.bounding_box();
  AnalysisBox b;
  for (int a = 0; a < dom.dim(); ++a) {
    b.lo[a] = static_cast<std::int64_t>(std::floor(bb.lo[a] - pad));
    b.len[a] = static_cast<std::int64_t>(std::ceil(bb.hi[a] + pad)) - b.lo[a];
  }
  return b;
}

/// Samples f on the analysis grid of level j_max + 1, using f inside the
/// closure of Omega and the extension rule elsewhere. Even reflection mirrors
/// through the nearest boundary point until the image lands in Omega.
template <typename F>
GridField sample_extended(const Domain& dom, const AnalysisBox& box, int j_max, F&& f,
                          ExtensionRule rule = ExtensionRule::even_reflection) {
  const int d = dom.dim();
  Point origin{0, 0, 0};
  Extent ext{1, 1, 1};
  for (int a = 0; a < d; ++a) {
    origin[a] = static_cast<double>(box.lo[a]);
    ext[a] = box.len[a] << (j_max + 1);
  }
  GridField g(d, origin, std::ldexp(1.0, -(j_max + 1)), ext);
  for (std::int64_t n = 0; n < g.size(); ++n) {
    Point x = g.position(multi_index(n, g.extent, d));
    if (dom.contains_closed(x)) {
      g.values[n] = f(x);
      continue;
    }
    if (rule == ExtensionRule::zero) continue;
    double v = 0;
    bool found = false;
    for (int iter = 0; iter < 8 && !found; ++iter) {
      const Point p = nearest_boundary_point(dom, x);
      for (int a = 0; a < d; ++a) x[a] = 2 * p[a] - x[a];
      if (dom.contains_closed(x)) {
        v = f(x);
        found = true;
      } else if (iter == 7) {
        v = f(p);
        found = true;
      }
    }
    g.values[n] = v;
  }
  return g;
}

//-----------------------------------------------------------------------------
// Coefficient dump: kind,i,j,k0,..,value (CSV) and a bit-exact binary form.
//-----------------------------------------------------------------------------

inline void write_coefficients_csv(std::ostream& os, const CoefficientField& c) {
  os.precision(17);
  os << "kind,i,j";
  for (int a = 0; a < c.dim(); ++a) os << ",k" << a;
  os << ",value\n";
  c.for_each([&](CoefficientKind kind, int i, int j, const Shift& k, double v) {
    os << (kind == CoefficientKind::scaling ? "scaling" : "wavelet") << ',' << i << ',' << j;
    for (int a = 0; a < c.dim(); ++a) os << ',' << k[a];
    os << ',' << v << '\n';
  });
}

namespace detail {
template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw InputError("truncated binary stream");
  return v;
}
}  // namespace detail

/// Binary layout: "BSVC", u32 dim, j_max, order, i64 box_lo[d], box_len[d],
/// u8 restricted, dense blocks, then presence masks when restricted.
inline void write_coefficients_binary(std::ostream& os, const CoefficientField& c) {
  os.write("BSVC", 4);
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(c.dim()));
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(c.j_max()));
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(c.basis_order()));
  for (int a = 0; a < c.dim(); ++a) detail::put<std::int64_t>(os, c.box_lo()[a]);
  for (int a = 0; a < c.dim(); ++a) detail::put<std::int64_t>(os, c.box_len()[a]);
  detail::put<std::uint8_t>(os, c.is_restricted() ? 1 : 0);
  auto put_block = [&](const auto& v) {
    os.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * sizeof(v[0])));
  };
  put_block(c.scaling_block());
  for (int j = 0; j <= c.j_max(); ++j) put_block(c.level_block(j));
  if (c.is_restricted()) {
    put_block(c.scaling_mask());
    for (int j = 0; j <= c.j_max(); ++j) put_block(c.level_mask(j));
  }
}

inline CoefficientField read_coefficients_binary(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "BSVC") throw InputError("not a coefficient file");
  const int d = static_cast<int>(detail::get<std::uint32_t>(is));
  check_dimension(d);
  const int j_max = static_cast<int>(detail::get<std::uint32_t>(is));
  const int order = static_cast<int>(detail::get<std::uint32_t>(is));
  Shift lo{0, 0, 0};
  Extent len{1, 1, 1};
  for (int a = 0; a < d; ++a) lo[a] = detail::get<std::int64_t>(is);
  for (int a = 0; a < d; ++a) len[a] = detail::get<std::int64_t>(is);
  const bool restricted = detail::get<std::uint8_t>(is) != 0;
  CoefficientField c(d, j_max, order, lo, len);
  auto get_block = [&](auto& v) {
    is.read(reinterpret_cast<char*>(v.data()), std::streamsize(v.size() * sizeof(v[0])));
    if (!is) throw InputError("truncated coefficient file");
  };
  get_block(c.scaling_block());
  for (int j = 0; j <= j_max; ++j) get_block(c.level_block(j));
  if (restricted) {
    std::vector<std::uint8_t> m0(static_cast<std::size_t>(c.level_size(0)));
    get_block(m0);
    std::vector<std::vector<std::uint8_t>> ms(static_cast<std::size_t>(j_max + 1));
    for (int j = 0; j <= j_max; ++j) {
      ms[j].resize(static_cast<std::size_t>(c.level_size(j)));
      get_block(ms[j]);
    }
    c.set_masks(std::move(m0), std::move(ms));
  }
  return c;
}

}  // namespace besov
