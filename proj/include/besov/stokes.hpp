#pragma once

// Stationary Stokes on a MAC (marker-and-cell) grid over a voxel domain.
// Velocity components live on cell faces, pressure in cell centres. The
// saddle-point system is solved by conjugate gradients on the pressure Schur
// complement (Uzawa), followed by a discrete projection that makes the
// velocity divergence free to round-off.

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "besov/core.hpp"
#include "besov/geometry.hpp"

namespace besov {

using VectorField = std::function<Point(const Point&)>;

inline VectorField zero_field() {
  return [](const Point&) { return Point{0, 0, 0}; };
}

struct ProblemData {
  VectorField f = zero_field();  // body force
  VectorField g = zero_field();  // boundary velocity
  double nu = 0;                 // Reynolds number (ignored by the Stokes solve)
};

//-----------------------------------------------------------------------------
// Grid bookkeeping. The cell box is the domain's bounding box padded by one
// empty layer, so every stencil neighbour has a slot.
//-----------------------------------------------------------------------------

enum class FaceKind : std::uint8_t { outside, boundary, interior };

class MacGrid {
 public:
  explicit MacGrid(const Domain& fine) : domain_(fine), dim_(fine.dim()), h_(fine.cell_size()) {
    for (int a = 0; a < dim_; ++a) {
      cells_[a] = fine.extent()[a] + 2;
      origin_[a] = fine.origin()[a] - h_;
    }
    occ_.assign(static_cast<std::size_t>(product(cells_, dim_)), 0);
    for (std::int64_t n = 0; n < product(cells_, dim_); ++n) {
      Shift c = multi_index(n, cells_, dim_);
      for (int a = 0; a < dim_; ++a) --c[a];
      occ_[n] = fine.cell_occupied(c) ? 1 : 0;
    }
    cell_unknown_.assign(occ_.size(), -1);
    for (std::size_t n = 0; n < occ_.size(); ++n)
      if (occ_[n]) cell_unknown_[n] = n_cells_++;
    for (int a = 0; a < dim_; ++a) {
      const Extent fe = face_extent(a);
      kind_[a].assign(static_cast<std::size_t>(product(fe, dim_)), FaceKind::outside);
      unknown_[a].assign(kind_[a].size(), -1);
      for (std::int64_t n = 0; n < product(fe, dim_); ++n) {
        const Shift i = multi_index(n, fe, dim_);
        Shift lo = i;
        --lo[a];
        const bool ol = occupied(lo), oh = occupied(i);
        if (ol && oh) {
          kind_[a][n] = FaceKind::interior;
          unknown_[a][n] = n_faces_++;
        } else if (ol || oh) {
          kind_[a][n] = FaceKind::boundary;
          ++n_boundary_;
        }
      }
    }
  }

  const Domain& domain() const { return domain_; }
  int dim() const { return dim_; }
  double h() const { return h_; }
  const Point& origin() const { return origin_; }
  const Extent& cells() const { return cells_; }
  Extent face_extent(int a) const {
    Extent e = cells_;
    ++e[a];
    return e;
  }
  std::int64_t face_count(int a) const { return product(face_extent(a), dim_); }
  std::int64_t unknowns() const { return n_faces_; }
  std::int64_t cell_unknowns() const { return n_cells_; }
  std::int64_t boundary_faces() const { return n_boundary_; }

  bool in_cells(const Shift& c) const {
    for (int a = 0; a < dim_; ++a)
      if (c[a] < 0 || c[a] >= cells_[a]) return false;
    return true;
  }
  bool occupied(const Shift& c) const { return in_cells(c) && occ_[linear_index(c, cells_, dim_)] != 0; }
  std::int64_t cell_unknown(const Shift& c) const { return cell_unknown_[linear_index(c, cells_, dim_)]; }

  bool in_faces(int a, const Shift& i) const {
    const Extent fe = face_extent(a);
    for (int b = 0; b < dim_; ++b)
      if (i[b] < 0 || i[b] >= fe[b]) return false;
    return true;
  }
  std::int64_t face_index(int a, const Shift& i) const { return linear_index(i, face_extent(a), dim_); }
  FaceKind kind(int a, std::int64_t n) const { return kind_[a][n]; }
  FaceKind kind(int a, const Shift& i) const { return in_faces(a, i) ? kind_[a][face_index(a, i)] : FaceKind::outside; }
  std::int64_t unknown(int a, std::int64_t n) const { return unknown_[a][n]; }

  Point cell_center(const Shift& c) const {
    Point x{0, 0, 0};
    for (int b = 0; b < dim_; ++b) x[b] = origin_[b] + (static_cast<double>(c[b]) + 0.5) * h_;
    return x;
  }
  Point face_center(int a, const Shift& i) const {
    Point x = cell_center(i);
    x[a] -= 0.5 * h_;
    return x;
  }
  Point node(const Shift& v) const {
    Point x{0, 0, 0};
    for (int b = 0; b < dim_; ++b) x[b] = origin_[b] + static_cast<double>(v[b]) * h_;
    return x;
  }
  /// Outward normal sign of a boundary face (+1 if the occupied cell is below).
  int boundary_sign(int a, const Shift& i) const {
    Shift lo = i;
    --lo[a];
    return occupied(lo) ? +1 : -1;
  }

  /// Laplacian neighbours of interior face i of component a.
  /// kind = interior (unknown), boundary (data at the face centre) or outside
  /// (ghost mirrored through the wall point halfway between the faces).
  template <typename F>
  void for_each_neighbor(int a, const Shift& i, F&& f) const {
    for (int b = 0; b < dim_; ++b)
      for (int s : {-1, 1}) {
        Shift n = i;
        n[b] += s;
        const FaceKind k = kind(a, n);
        Point wall = face_center(a, i);
        wall[b] += 0.5 * s * h_;
        f(b, s, n, k, wall);
      }
  }

 private:
  Domain domain_;
  int dim_;
  double h_;
  Point origin_{0, 0, 0};
  Extent cells_{1, 1, 1};
  std::vector<std::uint8_t> occ_;
  std::vector<std::int64_t> cell_unknown_;
  std::array<std::vector<FaceKind>, kMaxDim> kind_;
  std::array<std::vector<std::int64_t>, kMaxDim> unknown_;
  std::int64_t n_faces_ = 0;
  std::int64_t n_cells_ = 0;
  std::int64_t n_boundary_ = 0;
};

/// One value per face slot for each component.
struct FaceField {
  std::shared_ptr<const MacGrid> grid;
  std::array<std::vector<double>, kMaxDim> v;

  FaceField() = default;
  explicit FaceField(std::shared_ptr<const MacGrid> g) : grid(std::move(g)) {
    for (int a = 0; a < grid->dim(); ++a) v[a].assign(static_cast<std::size_t>(grid->face_count(a)), 0.0);
  }
  double at(int a, const Shift& i) const { return v[a][grid->face_index(a, i)]; }

  /// Grid l2 norm over interior faces.
  double interior_norm() const {
    NeumaierSum s;
    for (int a = 0; a < grid->dim(); ++a)
      for (std::size_t n = 0; n < v[a].size(); ++n)
        if (grid->kind(a, n) == FaceKind::interior) s += v[a][n] * v[a][n];
    return std::sqrt(s.value() * std::pow(grid->h(), grid->dim()));
  }
};

struct FlowState {
  FaceField u;                  // every face slot; ghost slots hold wall reflections
  std::vector<double> pressure;  // per cell of the padded box, zero outside
  double momentum_residual = 0;
  double divergence = 0;
  int iterations = 0;
  std::vector<double> residual_history;
  std::vector<std::string> notes;

  const MacGrid& grid() const { return *u.grid; }
  int dim() const { return u.grid->dim(); }
  double h() const { return u.grid->h(); }

  /// Subtracts the mean over occupied cells (canonical representative).
  void normalize_pressure() {
    const auto& g = grid();
    NeumaierSum s;
    for (std::size_t n = 0; n < pressure.size(); ++n)
      if (g.cell_unknown(multi_index(std::int64_t(n), g.cells(), g.dim())) >= 0) s += pressure[n];
    const double mean = s.value() / static_cast<double>(g.cell_unknowns());
    for (std::size_t n = 0; n < pressure.size(); ++n)
      if (g.cell_unknown(multi_index(std::int64_t(n), g.cells(), g.dim())) >= 0) pressure[n] -= mean;
  }

  /// Velocity component averaged to cell centres of the unpadded domain.
  GridField cell_velocity(int a) const {
    const auto& g = grid();
    const Domain& dom = g.domain();
    Point o = dom.origin();
    for (int b = 0; b < dim(); ++b) o[b] += 0.5 * h();
    GridField out(dim(), o, h(), dom.extent());
    for (std::int64_t n = 0; n < out.size(); ++n) {
      Shift c = multi_index(n, out.extent, dim());
      for (int b = 0; b < dim(); ++b) ++c[b];
      if (!g.occupied(c)) {
        out.values[n] = 0;
        continue;
      }
      Shift up = c;
      ++up[a];
      out.values[n] = 0.5 * (u.at(a, c) + u.at(a, up));
    }
    return out;
  }

  GridField cell_pressure() const {
    const auto& g = grid();
    const Domain& dom = g.domain();
    Point o = dom.origin();
    for (int b = 0; b < dim(); ++b) o[b] += 0.5 * h();
    GridField out(dim(), o, h(), dom.extent());
    for (std::int64_t n = 0; n < out.size(); ++n) {
      Shift c = multi_index(n, out.extent, dim());
      for (int b = 0; b < dim(); ++b) ++c[b];
      out.values[n] = pressure[linear_index(c, g.cells(), dim())];
    }
    return out;
  }

  /// Velocity component at grid nodes of the closure of Omega (NaN
  /// elsewhere). Boundary nodes take the data g, interior nodes average the
  /// 2^{d-1} faces around them.
  GridField node_velocity(int a, const VectorField& g_data) const {
    const auto& g = grid();
    const Domain& dom = g.domain();
    Extent e = dom.extent();
    for (int b = 0; b < dim(); ++b) ++e[b];
    GridField out(dim(), dom.origin(), h(), e);
    for (std::int64_t n = 0; n < out.size(); ++n) {
      const Shift v = multi_index(n, out.extent, dim());
      const Point x = out.position(v);
      if (!dom.contains_closed(x)) {
        out.values[n] = std::nan("");
        continue;
      }
      if (!dom.contains(x)) {
        out.values[n] = g_data(x)[a];
        continue;
      }
      // Node v (unpadded) is padded node v + 1; faces of component a around
      // it have index v + 1 along a and v or v + 1 along the others.
      double s = 0;
      const int others = dim() - 1;
      for (int m = 0; m < (1 << others); ++m) {
        Shift f = v;
        int bit = 0;
        for (int b = 0; b < dim(); ++b) {
          if (b == a) {
            f[b] = v[b] + 1;
          } else {
            f[b] = v[b] + ((m >> bit) & 1);
            ++bit;
          }
        }
        s += u.at(a, f);
      }
      out.values[n] = s / (1 << others);
    }
    return out;
  }
};

/// Face field sampled from an analytic velocity at every slot (ghosts
/// included), with pressure sampled at occupied cell centres.
inline FlowState state_from_functions(std::shared_ptr<const MacGrid> grid, const VectorField& u,
                                      const std::function<double(const Point&)>& p = nullptr) {
  FlowState s;
  s.u = FaceField(grid);
  for (int a = 0; a < grid->dim(); ++a)
    for (std::int64_t n = 0; n < grid->face_count(a); ++n)
      s.u.v[a][n] = u(grid->face_center(a, multi_index(n, grid->face_extent(a), grid->dim())))[a];
  s.pressure.assign(static_cast<std::size_t>(product(grid->cells(), grid->dim())), 0.0);
  if (p)
    for (std::size_t n = 0; n < s.pressure.size(); ++n) {
      const Shift c = multi_index(std::int64_t(n), grid->cells(), grid->dim());
      if (grid->occupied(c)) s.pressure[n] = p(grid->cell_center(c));
    }
  return s;
}

/// Grid l2 norm of the cell-centred divergence.
inline double divergence_norm(const FlowState& s) {
  const auto& g = s.grid();
  const int d = g.dim();
  NeumaierSum sum;
  for (std::int64_t n = 0; n < product(g.cells(), d); ++n) {
    const Shift c = multi_index(n, g.cells(), d);
    if (!g.occupied(c)) continue;
    double div = 0;
    for (int a = 0; a < d; ++a) {
      Shift up = c;
      ++up[a];
      div += (s.u.at(a, up) - s.u.at(a, c)) / g.h();
    }
    sum += div * div;
  }
  return std::sqrt(sum.value() * std::pow(g.h(), d));
}

/// -Delta_h u + grad_h pi - f (+ nu u.grad u) at interior faces; ghost and
/// boundary slots of the state supply the stencil values.
inline FaceField nonlinear_term(const FlowState& s);

inline FaceField momentum_defect(const FlowState& s, const VectorField& f, double nu = 0) {
  const auto& g = s.grid();
  const int d = g.dim();
  const double h2 = g.h() * g.h();
  FaceField out(s.u.grid);
  FaceField conv;
  if (nu != 0) conv = nonlinear_term(s);
  for (int a = 0; a < d; ++a) {
    const Extent fe = g.face_extent(a);
    for (std::int64_t n = 0; n < g.face_count(a); ++n) {
      if (g.kind(a, n) != FaceKind::interior) continue;
      const Shift i = multi_index(n, fe, d);
      const double ui = s.u.v[a][n];
      double lap = 0;
      g.for_each_neighbor(a, i, [&](int, int, const Shift& nb, FaceKind, const Point&) {
        lap += (s.u.at(a, nb) - ui) / h2;
      });
      Shift lo = i;
      --lo[a];
      const double dp = (s.pressure[linear_index(i, g.cells(), d)] - s.pressure[linear_index(lo, g.cells(), d)]) / g.h();
      double r = -lap + dp - f(g.face_center(a, i))[a];
      if (nu != 0) r += nu * conv.v[a][n];
      out.v[a][n] = r;
    }
  }
  return out;
}

//-----------------------------------------------------------------------------
// Solver
//-----------------------------------------------------------------------------

struct SolverConfig {
  int max_iterations = 2000;
  double compat_tolerance_per_face = 1e-10;  // accepted flux per boundary face
  double flux_correction_limit = 1e-8;      // larger fluxes are rejected
};

class StokesSolver {
 public:
  /// `h` must divide the domain cell size.
  StokesSolver(const Domain& dom, double h, SolverConfig cfg = {}) : cfg_(cfg), coarse_(dom) {
    const double ratio = dom.cell_size() / h;
    const auto factor = std::llround(ratio);
    if (factor < 1 || std::abs(ratio - static_cast<double>(factor)) > 1e-9 * ratio)
      throw DiscretizationError(concat("grid spacing ", h, " does not divide the domain cell size ", dom.cell_size()));
    grid_ = std::make_shared<const MacGrid>(dom.refined(static_cast<int>(factor)));
    assemble();
  }

  const MacGrid& grid() const { return *grid_; }
  const Domain& domain() const { return coarse_; }  // as given, before refinement
  std::shared_ptr<const MacGrid> grid_ptr() const { return grid_; }
  const SolverConfig& config() const { return cfg_; }

  /// Net discrete boundary flux of g (midpoint rule on boundary faces).
  double discrete_flux(const VectorField& g) const {
    const auto& G = *grid_;
    const int d = G.dim();
    NeumaierSum s;
    const double area = std::pow(G.h(), d - 1);
    for (int a = 0; a < d; ++a)
      for (std::int64_t n = 0; n < G.face_count(a); ++n)
        if (G.kind(a, n) == FaceKind::boundary) {
          const Shift i = multi_index(n, G.face_extent(a), d);
          s += G.boundary_sign(a, i) * g(G.face_center(a, i))[a] * area;
        }
    return s.value();
  }

  /// Solves -Delta u + grad pi = f + extra, div u = 0, u = g on the boundary.
  FlowState solve(const ProblemData& data, double tol, const FaceField* extra_force = nullptr) const {
    if (!(tol > 0)) throw DomainError("solver tolerance must be positive");
    const auto& G = *grid_;
    const int d = G.dim();
    const double h = G.h(), h2 = h * h;
    const double cellvol = std::pow(h, d);

    // Compatibility of the boundary data.
    std::vector<std::string> notes;
    const double flux = discrete_flux(data.g);
    const double total_area = static_cast<double>(G.boundary_faces()) * std::pow(h, d - 1);
    double shift = 0;  // subtracted outward normal velocity
    if (std::abs(flux) > cfg_.compat_tolerance_per_face * G.boundary_faces()) {
      if (std::abs(flux) > cfg_.flux_correction_limit)
        throw CompatibilityError(concat("boundary data violates the zero-flux condition: net flux ", flux), flux);
      shift = flux / total_area;
      notes.push_back(concat("boundary flux ", flux, " removed by constant normal correction"));
    }
    auto boundary_value = [&](int a, const Shift& i) {
      return data.g(G.face_center(a, i))[a] - shift * G.boundary_sign(a, i);
    };

    // Momentum right-hand side.
    Eigen::VectorXd F = Eigen::VectorXd::Zero(G.unknowns());
    for (int a = 0; a < d; ++a) {
      const Extent fe = G.face_extent(a);
      for (std::int64_t n = 0; n < G.face_count(a); ++n) {
        const auto row = G.unknown(a, n);
        if (row < 0) continue;
        const Shift i = multi_index(n, fe, d);
        double r = data.f(G.face_center(a, i))[a];
        if (extra_force) r += extra_force->v[a][n];
        G.for_each_neighbor(a, i, [&](int, int, const Shift& nb, FaceKind k, const Point& wall) {
          if (k == FaceKind::boundary)
            r += boundary_value(a, nb) / h2;
          else if (k == FaceKind::outside)
            r += 2 * data.g(wall)[a] / h2;
        });
        F[row] = r;
      }
    }
    // Continuity right-hand side: D u = Gv with known boundary faces moved over.
    Eigen::VectorXd Gv = Eigen::VectorXd::Zero(G.cell_unknowns());
    for (int a = 0; a < d; ++a) {
      const Extent fe = G.face_extent(a);
      for (std::int64_t n = 0; n < G.face_count(a); ++n) {
        if (G.kind(a, n) != FaceKind::boundary) continue;
        const Shift i = multi_index(n, fe, d);
        const double gv = boundary_value(a, i);
        Shift lo = i;
        --lo[a];
        if (G.occupied(i)) Gv[G.cell_unknown(i)] += gv / h;    // face is the lower face of cell i
        if (G.occupied(lo)) Gv[G.cell_unknown(lo)] -= gv / h;  // upper face of cell lo
      }
    }
    remove_mean(Gv);

    // Uzawa: S p = D A^{-1} F - Gv ... with the sign convention A u - D^T p = F.
    const Eigen::VectorXd AinvF = chol_.solve(F);
    Eigen::VectorXd b = Gv - D_ * AinvF;
    remove_mean(b);
    auto apply_S = [&](const Eigen::VectorXd& p) {
      Eigen::VectorXd y = D_ * chol_.solve(Eigen::VectorXd(D_.transpose() * p));
      remove_mean(y);
      return y;
    };
    const double cg_tol = 1e-3 * tol * h;
    Eigen::VectorXd p = Eigen::VectorXd::Zero(G.cell_unknowns());
    Eigen::VectorXd r = b, dir = r;
    double rr = r.squaredNorm();
    std::vector<double> history;
    const double scale = std::sqrt(cellvol);
    int it = 0;
    history.push_back(std::sqrt(rr) * scale);
    while (std::sqrt(rr) * scale > cg_tol) {
      if (it >= cfg_.max_iterations)
        throw ConvergenceError(concat("Uzawa-CG did not reach ", cg_tol, " in ", it, " iterations"), history);
      const Eigen::VectorXd Sd = apply_S(dir);
      const double alpha = rr / dir.dot(Sd);
      p += alpha * dir;
      r -= alpha * Sd;
      const double rr_new = r.squaredNorm();
      dir = r + (rr_new / rr) * dir;
      rr = rr_new;
      ++it;
      history.push_back(std::sqrt(rr) * scale);
    }
    Eigen::VectorXd u = chol_.solve(F + D_.transpose() * p);
    // Projection onto discretely divergence-free fields.
    Eigen::VectorXd res = Gv - D_ * u;
    remove_mean(res);
    Eigen::VectorXd rhs = res.tail(res.size() - 1);
    Eigen::VectorXd phi = Eigen::VectorXd::Zero(res.size());
    if (rhs.size() > 0) phi.tail(res.size() - 1) = neumann_.solve(rhs);
    u += D_.transpose() * phi;

    FlowState st;
    st.u = FaceField(grid_);
    st.pressure.assign(static_cast<std::size_t>(product(G.cells(), d)), 0.0);
    for (std::int64_t n = 0; n < product(G.cells(), d); ++n) {
      const Shift c = multi_index(n, G.cells(), d);
      if (G.occupied(c)) st.pressure[n] = p[G.cell_unknown(c)];
    }
    st.normalize_pressure();
    for (int a = 0; a < d; ++a) {
      const Extent fe = G.face_extent(a);
      for (std::int64_t n = 0; n < G.face_count(a); ++n) {
        const Shift i = multi_index(n, fe, d);
        if (G.kind(a, n) == FaceKind::interior)
          st.u.v[a][n] = u[G.unknown(a, n)];
        else if (G.kind(a, n) == FaceKind::boundary)
          st.u.v[a][n] = boundary_value(a, i);
      }
      // Ghost slots mirror interior faces through the wall.
      for (std::int64_t n = 0; n < G.face_count(a); ++n) {
        if (G.kind(a, n) != FaceKind::interior) continue;
        const Shift i = multi_index(n, fe, d);
        G.for_each_neighbor(a, i, [&](int, int, const Shift& nb, FaceKind k, const Point& wall) {
          if (k == FaceKind::outside) st.u.v[a][G.face_index(a, nb)] = 2 * data.g(wall)[a] - st.u.v[a][n];
        });
      }
    }
    st.iterations = it;
    st.residual_history = std::move(history);
    st.notes = std::move(notes);
    st.divergence = divergence_norm(st);
    // The defect uses the sampled force only; add the extra force back.
    FaceField def = momentum_defect(st, data.f);
    if (extra_force)
      for (int a = 0; a < d; ++a)
        for (std::size_t n = 0; n < def.v[a].size(); ++n) def.v[a][n] -= extra_force->v[a][n];
    st.momentum_residual = def.interior_norm();
    return st;
  }

  /// The discrete operator matrices, for tests.
  const Eigen::SparseMatrix<double>& laplacian() const { return A_; }
  const Eigen::SparseMatrix<double>& divergence_matrix() const { return D_; }

 private:
  static void remove_mean(Eigen::VectorXd& v) {
    if (v.size() == 0) return;
    NeumaierSum s;
    for (Eigen::Index i = 0; i < v.size(); ++i) s += v[i];
    v.array() -= s.value() / static_cast<double>(v.size());
  }

  void assemble() {
    const auto& G = *grid_;
    const int d = G.dim();
    const double h = G.h(), h2 = h * h;
    std::vector<Eigen::Triplet<double>> ta, td;
    for (int a = 0; a < d; ++a) {
      const Extent fe = G.face_extent(a);
      for (std::int64_t n = 0; n < G.face_count(a); ++n) {
        const auto row = G.unknown(a, n);
        if (row < 0) continue;
        const Shift i = multi_index(n, fe, d);
        double diag = 0;
        G.for_each_neighbor(a, i, [&](int, int, const Shift& nb, FaceKind k, const Point&) {
          diag += 1 / h2;
          if (k == FaceKind::interior)
            ta.emplace_back(row, G.unknown(a, G.face_index(a, nb)), -1 / h2);
          else if (k == FaceKind::outside)
            diag += 1 / h2;
        });
        ta.emplace_back(row, row, diag);
        // Face i is the upper face of cell i - e_a and the lower face of cell i.
        Shift lo = i;
        --lo[a];
        td.emplace_back(G.cell_unknown(i), row, -1 / h);
        td.emplace_back(G.cell_unknown(lo), row, 1 / h);
      }
    }
    A_.resize(G.unknowns(), G.unknowns());
    A_.setFromTriplets(ta.begin(), ta.end());
    D_.resize(G.cell_unknowns(), G.unknowns());
    D_.setFromTriplets(td.begin(), td.end());
    chol_.compute(A_);
    if (chol_.info() != Eigen::Success) throw DiscretizationError("momentum matrix factorization failed");
    const Eigen::SparseMatrix<double> L = D_ * D_.transpose();
    const auto m = L.rows();
    if (m > 1) {
      Eigen::SparseMatrix<double> Lp = L.bottomRightCorner(m - 1, m - 1);
      neumann_.compute(Lp);
      if (neumann_.info() != Eigen::Success) throw DiscretizationError("pressure Laplacian factorization failed");
    }
  }

  SolverConfig cfg_;
  Domain coarse_;
  std::shared_ptr<const MacGrid> grid_;
  Eigen::SparseMatrix<double> A_;
  Eigen::SparseMatrix<double> D_;
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> chol_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> neumann_;
};

inline FlowState solve_stokes(const Domain& dom, const ProblemData& data, double h, double tol,
                              SolverConfig cfg = {}) {
  return StokesSolver(dom, h, cfg).solve(data, tol);
}

//-----------------------------------------------------------------------------
// Nonlinear term u . grad u at interior faces.
//-----------------------------------------------------------------------------

inline FaceField nonlinear_term(const FlowState& s) {
  const auto& g = s.grid();
  const int d = g.dim();
  const double h = g.h();
  FaceField out(s.u.grid);
  for (int a = 0; a < d; ++a) {
    const Extent fe = g.face_extent(a);
    for (std::int64_t n = 0; n < g.face_count(a); ++n) {
      if (g.kind(a, n) != FaceKind::interior) continue;
      const Shift i = multi_index(n, fe, d);
      double acc = 0;
      for (int b = 0; b < d; ++b) {
        Shift p = i, m = i;
        ++p[b];
        --m[b];
        const double grad = (s.u.at(a, p) - s.u.at(a, m)) / (2 * h);
        double ub;
        if (b == a) {
          ub = s.u.v[a][n];
        } else {
          // u_b on the four b-faces of the cells on either side of face i.
          Shift c0 = i, c1 = i;
          --c0[a];
          Shift c0u = c0, c1u = c1;
          ++c0u[b];
          ++c1u[b];
          ub = 0.25 * (s.u.at(b, c0) + s.u.at(b, c0u) + s.u.at(b, c1) + s.u.at(b, c1u));
        }
        acc += ub * grad;
      }
      out.v[a][n] = acc;
    }
  }
  return out;
}

//-----------------------------------------------------------------------------
// Manufactured data and weak residuals
//-----------------------------------------------------------------------------

using ScalarField = std::function<double(const Point&)>;

namespace detail {
// Fourth-order central differences with step e.
inline double d1(const ScalarField& f, Point x, int a, double e) {
  auto at = [&](double t) {
    Point y = x;
    y[a] += t;
    return f(y);
  };
  return (-at(2 * e) + 8 * at(e) - 8 * at(-e) + at(-2 * e)) / (12 * e);
}
inline double d2(const ScalarField& f, Point x, int a, double e) {
  auto at = [&](double t) {
    Point y = x;
    y[a] += t;
    return f(y);
  };
  return (-at(2 * e) + 16 * at(e) - 30 * at(0) + 16 * at(-e) - at(-2 * e)) / (12 * e * e);
}
}  // namespace detail

/// f = -Delta u + grad pi by finite differences; rejects u whose divergence
/// exceeds 1e-6 (relative to the gradient scale) on a probe lattice in `probe`.
inline VectorField manufactured_forcing(int d, const VectorField& u, const ScalarField& pi, const Box& probe,
                                        double step = 1e-3) {
  check_dimension(d);
  auto comp = [u](int a) { return ScalarField([u, a](const Point& x) { return u(x)[a]; }); };
  const int m = 7;
  Extent e{m, m, m};
  double worst = 0, scale = 1e-300;
  for (std::int64_t n = 0; n < product(e, d); ++n) {
    const Shift i = multi_index(n, e, d);
    Point x{0, 0, 0};
    for (int a = 0; a < d; ++a) x[a] = probe.lo[a] + (probe.hi[a] - probe.lo[a]) * (i[a] + 0.5) / m;
    double div = 0;
    for (int a = 0; a < d; ++a) {
      const double g = detail::d1(comp(a), x, a, step);
      div += g;
      scale = std::max(scale, std::abs(g));
    }
    worst = std::max(worst, std::abs(div));
  }
  if (worst > 1e-6 * std::max(1.0, scale))
    throw InputError(concat("manufactured velocity is not divergence free: max |div u| = ", worst));
  return [d, u, pi, step, comp](const Point& x) {
    Point f{0, 0, 0};
    for (int a = 0; a < d; ++a) {
      double lap = 0;
      for (int b = 0; b < d; ++b) lap += detail::d2(comp(a), x, b, step);
      f[a] = -lap + detail::d1(pi, x, a, step);
    }
    return f;
  };
}

/// Smooth bump prod sin^2(pi (x - lo)/w) in one velocity component.
struct TestField {
  Box support;
  int component = 0;

  double value(const Point& x, int d) const {
    double v = 1;
    for (int a = 0; a < d; ++a) {
      if (x[a] <= support.lo[a] || x[a] >= support.hi[a]) return 0;
      v *= std::pow(std::sin(M_PI * (x[a] - support.lo[a]) / support.side(a)), 2);
    }
    return v;
  }
  double h1_norm(int d) const {
    double l2 = 1;
    for (int a = 0; a < d; ++a) l2 *= 3 * support.side(a) / 8;
    double grad = 0;
    for (int a = 0; a < d; ++a) grad += l2 / (3 * support.side(a) / 8) * M_PI * M_PI / (2 * support.side(a));
    return std::sqrt(l2 + grad);
  }
};

/// max over tests of |int grad u : grad phi - int pi div phi - f(phi)
/// + nu int (u . grad u) phi| / ||phi||_{H^1}. Summation by parts turns the
/// integrals into the momentum defect tested against phi at the faces.
inline double weak_residual(const FlowState& s, const ProblemData& data, const std::vector<TestField>& tests,
                            double nu = 0) {
  const auto& g = s.grid();
  const int d = g.dim();
  const Domain& dom = g.domain();
  for (const auto& t : tests) {
    Point c{0, 0, 0};
    for (int a = 0; a < d; ++a) c[a] = 0.5 * (t.support.lo[a] + t.support.hi[a]);
    if (t.component < 0 || t.component >= d) throw InputError("test field component out of range");
    if (!dom.contains(c) || squared_boundary_distance(dom, t.support) <= 0)
      throw InputError("test field support touches the boundary");
  }
  const FaceField def = momentum_defect(s, data.f, nu);
  const double vol = std::pow(g.h(), d);
  double worst = 0;
  for (const auto& t : tests) {
    const int a = t.component;
    NeumaierSum acc;
    const Extent fe = g.face_extent(a);
    for (std::int64_t n = 0; n < g.face_count(a); ++n) {
      if (g.kind(a, n) != FaceKind::interior) continue;
      const double phi = t.value(g.face_center(a, multi_index(n, fe, d)), d);
      if (phi != 0) acc += def.v[a][n] * phi * vol;
    }
    worst = std::max(worst, std::abs(acc.value()) / t.h1_norm(d));
  }
  return worst;
}

//-----------------------------------------------------------------------------
// Output: binary grid dump and CSV summary.
//-----------------------------------------------------------------------------

/// "BSVF", u32 d, f64 h, i64 cell extent[d], f64 origin[d], then each
/// velocity component over its face grid and the cell pressure.
inline void write_state_binary(std::ostream& os, const FlowState& s) {
  const auto& g = s.grid();
  const int d = g.dim();
  os.write("BSVF", 4);
  auto put = [&](const auto& v) { os.write(reinterpret_cast<const char*>(&v), sizeof(v)); };
  put(static_cast<std::uint32_t>(d));
  put(g.h());
  for (int a = 0; a < d; ++a) put(static_cast<std::int64_t>(g.cells()[a]));
  for (int a = 0; a < d; ++a) put(g.origin()[a]);
  for (int a = 0; a < d; ++a)
    os.write(reinterpret_cast<const char*>(s.u.v[a].data()), std::streamsize(s.u.v[a].size() * sizeof(double)));
  os.write(reinterpret_cast<const char*>(s.pressure.data()), std::streamsize(s.pressure.size() * sizeof(double)));
}

inline void write_state_summary_csv(std::ostream& os, const FlowState& s) {
  os.precision(17);
  os << "residual,divergence,iterations\n";
  os << s.momentum_residual << ',' << s.divergence << ',' << s.iterations << '\n';
}

}  // namespace besov
