#pragma once

// Picard iteration T(u, pi) = L(f - nu u.grad u, g) for stationary
// Navier-Stokes, with measured surrogates for ||L|| and the embedding
// constant C, the contraction condition and the ball A_{1/2}.

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "besov/besov_analysis.hpp"
#include "besov/core.hpp"
#include "besov/geometry.hpp"
#include "besov/stokes.hpp"
#include "besov/wavelet.hpp"

namespace besov {

//-----------------------------------------------------------------------------
// Norm surrogates (p = q = 2 wavelet norms)
//-----------------------------------------------------------------------------

/// sqrt(sum_a ||E u_a||^2_{B^s_2(L_2)} + ||pi||^2_{L_2}) with E the even
/// reflection and coefficients restricted to cubes meeting Omega.
class StateNorm {
 public:
  StateNorm(std::shared_ptr<const MacGrid> grid, double s = 1.0, int r = 2, double pad = 1.0)
      : grid_(std::move(grid)), s_(s), basis_(build_basis(grid_->dim(), r)) {
    const double levels = -std::log2(grid_->h());
    j_max_ = static_cast<int>(std::lround(levels)) - 1;
    if (j_max_ < 0 || std::ldexp(1.0, -(j_max_ + 1)) != grid_->h())
      throw ConfigError(concat("wavelet norms need a dyadic grid spacing 2^-k with k >= 1, got ", grid_->h()));
    const Domain& dom = grid_->domain();
    for (int a = 0; a < dom.dim(); ++a) {
      const double o = dom.origin()[a] / grid_->h();
      if (o != std::floor(o)) throw ConfigError("domain origin must lie on the grid");
    }
    box_ = analysis_box(dom, pad);
    family_ = std::make_shared<IndexSetFamily>(build_index_sets(dom, basis_.support(), j_max_));
  }

  double smoothness() const { return s_; }
  int j_max() const { return j_max_; }
  const WaveletBasis& basis() const { return basis_; }

  /// Wavelet coefficients of the extended velocity component a.
  CoefficientField velocity_coefficients(const FlowState& st, const VectorField& g, int a) const {
    const GridField nodes = st.node_velocity(a, g);
    const double h = grid_->h();
    const Point o = nodes.origin;
    const int d = nodes.dim;
    auto lookup = [&](const Point& x) {
      Shift i{0, 0, 0};
      for (int b = 0; b < d; ++b) i[b] = std::llround((x[b] - o[b]) / h);
      return nodes.at(i);
    };
    const GridField samples = sample_extended(grid_->domain(), box_, j_max_, lookup);
    return analyze(samples, basis_, j_max_).restricted(*family_);
  }

  double velocity_norm(const FlowState& st, const VectorField& g) const {
    double sq = 0;
    for (int a = 0; a < grid_->dim(); ++a) {
      const double n = discrete_besov_norm(velocity_coefficients(st, g, a), {s_, 2, 2});
      sq += n * n;
    }
    return std::sqrt(sq);
  }

  double pressure_norm(const FlowState& st) const {
    NeumaierSum s;
    for (std::size_t n = 0; n < st.pressure.size(); ++n) s += st.pressure[n] * st.pressure[n];
    return std::sqrt(s.value() * std::pow(grid_->h(), grid_->dim()));
  }

  double operator()(const FlowState& st, const VectorField& g) const {
    const double v = velocity_norm(st, g), p = pressure_norm(st);
    return std::sqrt(v * v + p * p);
  }

 private:
  std::shared_ptr<const MacGrid> grid_;
  double s_;
  WaveletBasis basis_;
  int j_max_ = 0;
  AnalysisBox box_;
  std::shared_ptr<IndexSetFamily> family_;
};

/// Grid L2 norm of f sampled at interior faces.
inline double force_norm(const MacGrid& g, const VectorField& f) {
  NeumaierSum s;
  for (int a = 0; a < g.dim(); ++a)
    for (std::int64_t n = 0; n < g.face_count(a); ++n)
      if (g.kind(a, n) == FaceKind::interior) {
        const double v = f(g.face_center(a, multi_index(n, g.face_extent(a), g.dim())))[a];
        s += v * v;
      }
  return std::sqrt(s.value() * std::pow(g.h(), g.dim()));
}

/// Facet-wise discrete H^1(boundary) norm of g: face-centre values plus
/// tangential central differences.
inline double boundary_data_norm(const MacGrid& g, const VectorField& gv) {
  const int d = g.dim();
  const double h = g.h();
  NeumaierSum s;
  for (int a = 0; a < d; ++a)
    for (std::int64_t n = 0; n < g.face_count(a); ++n) {
      if (g.kind(a, n) != FaceKind::boundary) continue;
      const Point x = g.face_center(a, multi_index(n, g.face_extent(a), d));
      const Point v = gv(x);
      double local = 0;
      for (int c = 0; c < d; ++c) local += v[c] * v[c];
      for (int t = 0; t < d; ++t) {
        if (t == a) continue;
        Point xp = x, xm = x;
        xp[t] += 0.5 * h;
        xm[t] -= 0.5 * h;
        const Point vp = gv(xp), vm = gv(xm);
        for (int c = 0; c < d; ++c) local += std::pow((vp[c] - vm[c]) / h, 2);
      }
      s += local * std::pow(h, d - 1);
    }
  return std::sqrt(s.value());
}

//-----------------------------------------------------------------------------
// Contraction condition
//-----------------------------------------------------------------------------

struct ConditionCheck {
  bool holds = false;
  double lhs = 0;     // C nu (||f|| + ||g||)
  double rhs = 0;     // 1 / (4 ||L||^2)
  double margin = 0;  // rhs - lhs
};

inline ConditionCheck contraction_condition(double C, double nu, double f_norm, double g_norm, double L_norm) {
  if (C < 0 || nu < 0 || f_norm < 0 || g_norm < 0) throw DomainError("contraction inputs must be nonnegative");
  if (!(L_norm > 0)) throw DomainError("operator norm surrogate must be positive");
  ConditionCheck c;
  c.lhs = C * nu * (f_norm + g_norm);
  c.rhs = 1.0 / (4.0 * L_norm * L_norm);
  c.margin = c.rhs - c.lhs;
  c.holds = c.lhs < c.rhs;
  return c;
}

/// Radius 1/(2 nu C L) of A_{1/2}; infinite when nu C = 0.
inline double ball_radius(double C, double nu, double L_norm) {
  const double den = 2 * nu * C * L_norm;
  return den > 0 ? 1.0 / den : std::numeric_limits<double>::infinity();
}

//-----------------------------------------------------------------------------
// Measured surrogates
//-----------------------------------------------------------------------------

/// Smooth random force: sum of a few sine modes over the bounding box.
inline VectorField random_force(const Domain& dom, Rng& rng, int modes = 3) {
  const int d = dom.dim();
  const Box bb = dom.bounding_box();
  struct Mode {
    int comp;
    std::array<int, kMaxDim> k;
    double c;
  };
  std::vector<Mode> ms;
  for (int a = 0; a < d; ++a)
    for (int m = 0; m < modes; ++m) {
      Mode mo{a, {1, 1, 1}, rng.uniform(-1, 1)};
      for (int b = 0; b < d; ++b) mo.k[b] = 1 + static_cast<int>(rng.uniform() * modes);
      ms.push_back(mo);
    }
  return [ms, bb, d](const Point& x) {
    Point f{0, 0, 0};
    for (const auto& m : ms) {
      double v = m.c;
      for (int b = 0; b < d; ++b) v *= std::sin(M_PI * m.k[b] * (x[b] - bb.lo[b]) / bb.side(b));
      f[m.comp] += v;
    }
    return f;
  };
}

struct Surrogates {
  double L_norm = 0;        // max ||solve(f, 0)||_X / ||f||
  double C = 0;             // C_grad * C_inf
  double C_grad = 0;        // max ||grad u||_{L2} / ||u||_X
  double C_inf = 0;         // max ||u||_inf / ||u||_X
  int probes = 0;
};

inline double velocity_sup(const FlowState& st) {
  double m = 0;
  for (int a = 0; a < st.dim(); ++a)
    for (std::size_t n = 0; n < st.u.v[a].size(); ++n)
      if (st.grid().kind(a, std::int64_t(n)) != FaceKind::outside) m = std::max(m, std::abs(st.u.v[a][n]));
  return m;
}

/// Grid L2 norm of the face-to-face differences of u over Omega.
inline double velocity_gradient_l2(const FlowState& st) {
  const auto& g = st.grid();
  const int d = g.dim();
  NeumaierSum s;
  for (int a = 0; a < d; ++a)
    for (std::int64_t n = 0; n < g.face_count(a); ++n) {
      if (g.kind(a, n) != FaceKind::interior) continue;
      const Shift i = multi_index(n, g.face_extent(a), d);
      for (int b = 0; b < d; ++b) {
        Shift p = i;
        ++p[b];
        if (g.kind(a, p) == FaceKind::outside) continue;
        const double v = (st.u.at(a, p) - st.u.v[a][n]) / g.h();
        s += v * v;
      }
    }
  return std::sqrt(s.value() * std::pow(g.h(), d));
}

inline Surrogates measure_surrogates(const StokesSolver& solver, const StateNorm& norm, std::uint64_t seed,
                                     int probes = 20, double tol = 1e-8) {
  Rng rng(seed);
  Surrogates s;
  s.probes = probes;
  for (int k = 0; k < probes; ++k) {
    ProblemData pd;
    pd.f = random_force(solver.grid().domain(), rng);
    const FlowState st = solver.solve(pd, tol);
    const double x = norm(st, pd.g);
    const double data = force_norm(solver.grid(), pd.f);
    if (data > 0) s.L_norm = std::max(s.L_norm, x / data);
    if (x > 0) {
      s.C_grad = std::max(s.C_grad, velocity_gradient_l2(st) / x);
      s.C_inf = std::max(s.C_inf, velocity_sup(st) / x);
    }
  }
  s.C = s.C_grad * s.C_inf;
  return s;
}

//-----------------------------------------------------------------------------
// Iteration
//-----------------------------------------------------------------------------

inline FlowState picard_step(const StokesSolver& solver, const FlowState& state, const ProblemData& data, double tol) {
  if (data.nu == 0) return solver.solve(data, tol);
  FaceField extra = nonlinear_term(state);
  for (int a = 0; a < state.dim(); ++a)
    for (auto& v : extra.v[a]) v *= -data.nu;
  return solver.solve(data, tol, &extra);
}

inline FlowState zero_state(std::shared_ptr<const MacGrid> grid) {
  FlowState s;
  s.u = FaceField(grid);
  s.pressure.assign(static_cast<std::size_t>(product(grid->cells(), grid->dim())), 0.0);
  return s;
}

inline FlowState difference(const FlowState& a, const FlowState& b) {
  FlowState d = a;
  for (int c = 0; c < a.dim(); ++c)
    for (std::size_t n = 0; n < d.u.v[c].size(); ++n) d.u.v[c][n] -= b.u.v[c][n];
  for (std::size_t n = 0; n < d.pressure.size(); ++n) d.pressure[n] -= b.pressure[n];
  return d;
}

struct PicardStep {
  int iter = 0;
  double state_norm = 0;
  double diff_norm = 0;
  double contraction_factor = std::nan("");  // diff_k / diff_{k-1}, k >= 1
  bool in_ball = true;
  double condition_margin = 0;
};

enum class Termination { converged, max_iterations, diverged };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::converged: return "converged";
    case Termination::max_iterations: return "max_iterations";
    case Termination::diverged: return "diverged";
  }
  return "?";
}

struct PicardTrace {
  std::vector<PicardStep> steps;
  Termination termination = Termination::max_iterations;
  bool outside_guaranteed_regime = false;
  ConditionCheck condition;
  double radius = 0;
  double f_norm = 0;
  double g_norm = 0;
  double weak_residual = 0;
};

struct PicardResult {
  FlowState state;
  PicardTrace trace;
};

/// Interior bumps on a 4^d lattice of sub-cells of every occupied domain
/// cell, each shrunk to 80% of its sub-cell, for every velocity component.
inline std::vector<TestField> default_test_fields(const Domain& dom) {
  std::vector<TestField> out;
  const int d = dom.dim();
  const double w = dom.cell_size() / 4;
  const Extent sub{4, 4, 4};
  for (std::int64_t n = 0; n < product(dom.extent(), d); ++n) {
    const Shift c = multi_index(n, dom.extent(), d);
    if (!dom.cell_occupied(c)) continue;
    for (std::int64_t m = 0; m < product(sub, d); ++m) {
      const Shift k = multi_index(m, sub, d);
      Box b{d, {0, 0, 0}, {0, 0, 0}};
      for (int a = 0; a < d; ++a) {
        const double lo = dom.origin()[a] + c[a] * dom.cell_size() + k[a] * w;
        b.lo[a] = lo + 0.1 * w;
        b.hi[a] = lo + 0.9 * w;
      }
      for (int a = 0; a < d; ++a) out.push_back({b, a});
    }
  }
  return out;
}

struct PicardOptions {
  double tol = 1e-8;
  int max_iter = 50;
  Surrogates surrogates;
  std::optional<FlowState> initial;  // defaults to the zero state
};

inline PicardResult solve_navier_stokes(const StokesSolver& solver, const StateNorm& norm, const ProblemData& data,
                                        const PicardOptions& opt) {
  if (data.nu < 0) throw DomainError("nu must be nonnegative");
  const auto grid = solver.grid_ptr();
  PicardResult res;
  PicardTrace& tr = res.trace;
  tr.f_norm = force_norm(*grid, data.f);
  tr.g_norm = boundary_data_norm(*grid, data.g);
  const auto& sg = opt.surrogates;
  if (sg.L_norm > 0) {
    tr.condition = contraction_condition(sg.C, data.nu, tr.f_norm, tr.g_norm, sg.L_norm);
    tr.outside_guaranteed_regime = !tr.condition.holds;
  } else {
    tr.outside_guaranteed_regime = data.nu > 0;
  }
  tr.radius = ball_radius(sg.C, data.nu, sg.L_norm);

  FlowState x = opt.initial ? *opt.initial : zero_state(grid);
  const VectorField zero = zero_field();
  // nu = 0: T is constant, one application is the fixed point.
  if (data.nu == 0) {
    res.state = solver.solve(data, opt.tol);
    PicardStep st;
    st.iter = 1;
    st.state_norm = norm(res.state, data.g);
    st.diff_norm = norm(difference(res.state, x), zero);
    st.in_ball = st.state_norm <= tr.radius;
    st.condition_margin = tr.condition.margin;
    tr.steps.push_back(st);
    tr.termination = Termination::converged;
    tr.weak_residual = weak_residual(res.state, data, default_test_fields(solver.domain()), 0.0);
    return res;
  }
  int growth = 0;
  for (int k = 1; k <= opt.max_iter; ++k) {
    FlowState next = picard_step(solver, x, data, opt.tol);
    PicardStep st;
    st.iter = k;
    st.state_norm = norm(next, data.g);
    st.diff_norm = norm(difference(next, x), zero);
    if (!tr.steps.empty() && tr.steps.back().diff_norm > 0) st.contraction_factor = st.diff_norm / tr.steps.back().diff_norm;
    st.in_ball = st.state_norm <= tr.radius;
    st.condition_margin = tr.condition.margin;
    growth = (!tr.steps.empty() && st.diff_norm > tr.steps.back().diff_norm) ? growth + 1 : 0;
    tr.steps.push_back(st);
    x = std::move(next);
    if (!std::isfinite(st.diff_norm) || growth >= 5) {
      tr.termination = Termination::diverged;
      break;
    }
    if (st.diff_norm < opt.tol) {
      tr.termination = Termination::converged;
      break;
    }
  }
  tr.weak_residual = weak_residual(x, data, default_test_fields(solver.domain()), data.nu);
  res.state = std::move(x);
  return res;
}

inline void write_trace_csv(std::ostream& os, const PicardTrace& tr) {
  os.precision(17);
  os << "iter,state_norm,diff_norm,contraction_factor,in_ball,condition_margin\n";
  for (const auto& s : tr.steps)
    os << s.iter << ',' << s.state_norm << ',' << s.diff_norm << ','
       << (std::isnan(s.contraction_factor) ? std::string("") : concat(s.contraction_factor)) << ','
       << (s.in_ball ? 1 : 0) << ',' << s.condition_margin << '\n';
}

}  // namespace besov
