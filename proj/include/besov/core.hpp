#pragma once

// Shared vocabulary: error types, compensated sums, exact rationals and
// the small fixed-size vectors used for points and lattice shifts.

#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace besov {

//-----------------------------------------------------------------------------
// Errors
//-----------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation.
struct DomainError : Error { using Error::Error; };
/// A theorem hypothesis is violated (e.g. alpha >= 2 gamma).
struct HypothesisError : DomainError { using DomainError::DomainError; };
/// Lipschitz character too small for the d >= 4 admissible range.
struct DomainTooRough : DomainError { using DomainError::DomainError; };
/// Request outside what the artifact implements (e.g. d < 3 bounds).
struct OutOfScopeError : DomainError { using DomainError::DomainError; };
struct ConfigError : Error { using Error::Error; };
struct PreconditionError : Error { using Error::Error; };
struct ConsistencyError : Error { using Error::Error; };
struct InputError : Error { using Error::Error; };
struct DiscretizationError : Error { using Error::Error; };
struct InsufficientData : Error { using Error::Error; };

/// Memory budget exceeded while enumerating; carries the last completed level.
struct ResourceError : Error {
  ResourceError(const std::string& what, int level_reached)
      : Error(what), level_reached(level_reached) {}
  int level_reached;
};

/// Iterative solver failed; carries the residual history.
struct ConvergenceError : Error {
  ConvergenceError(const std::string& what, std::vector<double> history)
      : Error(what), residual_history(std::move(history)) {}
  std::vector<double> residual_history;
};

/// Boundary data violates the zero net flux condition.
struct CompatibilityError : Error {
  CompatibilityError(const std::string& what, double flux) : Error(what), flux(flux) {}
  double flux;
};

template <typename... Args>
std::string concat(const Args&... args) {
  std::ostringstream os;
  os.precision(17);
  (os << ... << args);
  return os.str();
}

//-----------------------------------------------------------------------------
// Compensated summation (Neumaier). Results depend only on input order.
//-----------------------------------------------------------------------------

class NeumaierSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  NeumaierSum& operator+=(double x) {
    add(x);
    return *this;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double compensated_sum(std::span<const double> xs) {
  NeumaierSum s;
  for (double x : xs) s.add(x);
  return s.value();
}

//-----------------------------------------------------------------------------
// Exact rationals for the bound calculators.
//-----------------------------------------------------------------------------

class Rational {
 public:
  constexpr Rational() = default;
  constexpr Rational(std::int64_t n) : num_(n), den_(1) {}  // NOLINT implicit
  Rational(std::int64_t n, std::int64_t d) : num_(n), den_(d) { normalize(); }

  std::int64_t num() const { return num_; }
  std::int64_t den() const { return den_; }
  double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }

  /// Exact conversion of a decimal literal such as "0.3" or "3/2".
  static Rational parse(const std::string& text) {
    const auto slash = text.find('/');
    if (slash != std::string::npos)
      return Rational(std::stoll(text.substr(0, slash)), std::stoll(text.substr(slash + 1)));
    const auto dot = text.find('.');
    if (dot == std::string::npos) return Rational(std::stoll(text));
    std::string digits = text.substr(0, dot) + text.substr(dot + 1);
    std::int64_t den = 1;
    for (std::size_t i = dot + 1; i < text.size(); ++i) den *= 10;
    return Rational(std::stoll(digits), den);
  }

  friend Rational operator+(Rational a, Rational b) {
    return from_wide(static_cast<__int128>(a.num_) * b.den_ + static_cast<__int128>(b.num_) * a.den_,
                     static_cast<__int128>(a.den_) * b.den_);
  }
  friend Rational operator-(Rational a, Rational b) { return a + (-b); }
  friend Rational operator-(Rational a) {
    Rational r;
    r.num_ = -a.num_;
    r.den_ = a.den_;
    return r;
  }
  friend Rational operator*(Rational a, Rational b) {
    return from_wide(static_cast<__int128>(a.num_) * b.num_, static_cast<__int128>(a.den_) * b.den_);
  }
  friend Rational operator/(Rational a, Rational b) {
    if (b.num_ == 0) throw DomainError("rational division by zero");
    return from_wide(static_cast<__int128>(a.num_) * b.den_, static_cast<__int128>(a.den_) * b.num_);
  }
  friend bool operator==(Rational a, Rational b) { return a.num_ == b.num_ && a.den_ == b.den_; }
  friend auto operator<=>(Rational a, Rational b) {
    return static_cast<__int128>(a.num_) * b.den_ <=> static_cast<__int128>(b.num_) * a.den_;
  }
  friend std::ostream& operator<<(std::ostream& os, Rational r) {
    os << r.num_;
    if (r.den_ != 1) os << '/' << r.den_;
    return os;
  }

 private:
  static Rational from_wide(__int128 n, __int128 d) {
    if (d == 0) throw DomainError("rational with zero denominator");
    if (d < 0) {
      n = -n;
      d = -d;
    }
    __int128 a = n < 0 ? -n : n, b = d;
    while (b != 0) {
      const __int128 t = a % b;
      a = b;
      b = t;
    }
    if (a > 1) {
      n /= a;
      d /= a;
    }
    constexpr __int128 lim = INT64_MAX;
    if (n > lim || n < -lim || d > lim) throw DomainError("rational overflow");
    Rational r;
    r.num_ = static_cast<std::int64_t>(n);
    r.den_ = static_cast<std::int64_t>(d);
    return r;
  }
  void normalize() { *this = from_wide(num_, den_); }

  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

inline Rational min(Rational a, Rational b) { return a < b ? a : b; }
inline Rational max(Rational a, Rational b) { return a < b ? b : a; }

//-----------------------------------------------------------------------------
// Points and lattice shifts. Dimension is a runtime value (2 or 3); unused
// trailing entries stay zero.
//-----------------------------------------------------------------------------

inline constexpr int kMaxDim = 3;
using Point = std::array<double, kMaxDim>;
using Shift = std::array<std::int64_t, kMaxDim>;
using Extent = std::array<std::int64_t, kMaxDim>;

inline void check_dimension(int d) {
  if (d != 2 && d != 3) throw DomainError(concat("dimension must be 2 or 3, got ", d));
}

inline std::int64_t product(const Extent& e, int d) {
  std::int64_t n = 1;
  for (int a = 0; a < d; ++a) n *= e[a];
  return n;
}

/// Row-major (axis 0 fastest) linear index of a multi-index inside `e`.
inline std::int64_t linear_index(const Shift& i, const Extent& e, int d) {
  std::int64_t idx = 0;
  for (int a = d - 1; a >= 0; --a) idx = idx * e[a] + i[a];
  return idx;
}

inline Shift multi_index(std::int64_t idx, const Extent& e, int d) {
  Shift i{0, 0, 0};
  for (int a = 0; a < d; ++a) {
    i[a] = idx % e[a];
    idx /= e[a];
  }
  return i;
}

inline double norm2(const Point& x, int d) {
  double s = 0.0;
  for (int a = 0; a < d; ++a) s += x[a] * x[a];
  return std::sqrt(s);
}

//-----------------------------------------------------------------------------
// Uniformly sampled scalar field over an axis-aligned box. Sample n sits at
// origin + n * spacing (node convention; callers decide whether the nodes are
// cell centres or cell corners).
//-----------------------------------------------------------------------------

struct GridField {
  int dim = 2;
  Point origin{0, 0, 0};
  double spacing = 1.0;
  Extent extent{1, 1, 1};
  std::vector<double> values;

  GridField() = default;
  GridField(int d, Point o, double h, Extent e) : dim(d), origin(o), spacing(h), extent(e) {
    for (int a = d; a < kMaxDim; ++a) extent[a] = 1;
    values.assign(static_cast<std::size_t>(product(extent, d)), 0.0);
  }

  std::int64_t size() const { return static_cast<std::int64_t>(values.size()); }
  double& at(const Shift& i) { return values[static_cast<std::size_t>(linear_index(i, extent, dim))]; }
  double at(const Shift& i) const { return values[static_cast<std::size_t>(linear_index(i, extent, dim))]; }
  Point position(const Shift& i) const {
    Point x{0, 0, 0};
    for (int a = 0; a < dim; ++a) x[a] = origin[a] + static_cast<double>(i[a]) * spacing;
    return x;
  }

  template <typename F>
  static GridField sample(int d, Point o, double h, Extent e, F&& f) {
    GridField g(d, o, h, e);
    for (std::int64_t n = 0; n < g.size(); ++n) g.values[n] = f(g.position(multi_index(n, g.extent, d)));
    return g;
  }
};

/// Seeded generator shared by probes and tests. The conversion to doubles is
/// done by hand so draws are identical across standard library vendors.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace besov
