#pragma once

// Voxelized Lipschitz domains, exact distances to the boundary, dyadic cubes
// Q_{j,k} = 2^{-j}(k + Q) and the distance-classified index sets used to
// count wavelets near the boundary.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "besov/core.hpp"

namespace besov {

/// Closed axis-aligned box.
struct Box {
  int dim = 2;
  Point lo{0, 0, 0};
  Point hi{0, 0, 0};

  double side(int axis) const { return hi[axis] - lo[axis]; }
  friend bool operator==(const Box&, const Box&) = default;
};

/// Squared Euclidean distance between two closed boxes (0 if they meet).
inline double squared_distance(const Box& a, const Box& b) {
  double s = 0.0;
  for (int ax = 0; ax < a.dim; ++ax) {
    const double gap = std::max({0.0, b.lo[ax] - a.hi[ax], a.lo[ax] - b.hi[ax]});
    s += gap * gap;
  }
  return s;
}

/// A planar piece of the boundary: x[axis] == plane, with outward normal
/// `sign` * e_axis. `rect` is degenerate along `axis`.
struct Facet {
  int axis = 0;
  int sign = 1;
  Box rect;

  double area() const {
    double a = 1.0;
    for (int b = 0; b < rect.dim; ++b)
      if (b != axis) a *= rect.side(b);
    return a;
  }
  Point normal() const {
    Point n{0, 0, 0};
    n[axis] = sign;
    return n;
  }
};

/// One cell face on the boundary of the voxel grid.
struct BoundaryFace {
  int axis;
  int sign;
  Point center;
  double area;
};

class Domain {
 public:
  Domain() = default;

  /// Builds a domain from an occupancy mask over `extent` cells of size `h`
  /// starting at `origin`. Throws InputError for empty or disconnected masks.
  static Domain from_mask(int d, double h, Point origin, Extent extent, std::vector<std::uint8_t> mask) {
    check_dimension(d);
    if (!(h > 0)) throw InputError("cell_size must be positive");
    for (int a = d; a < kMaxDim; ++a) {
      extent[a] = 1;
      origin[a] = 0.0;
    }
    for (int a = 0; a < d; ++a)
      if (extent[a] < 1) throw InputError("extent must be positive along every axis");
    if (static_cast<std::int64_t>(mask.size()) != product(extent, d))
      throw InputError(concat("occupancy has ", mask.size(), " cells, expected ", product(extent, d)));
    Domain dom;
    dom.dim_ = d;
    dom.h_ = h;
    dom.origin_ = origin;
    dom.extent_ = extent;
    dom.occ_ = std::move(mask);
    for (auto& v : dom.occ_) v = v ? 1 : 0;
    if (std::none_of(dom.occ_.begin(), dom.occ_.end(), [](auto v) { return v != 0; }))
      throw InputError("occupancy is empty");
    if (!dom.cells_connected()) throw InputError("domain is not connected");
    dom.build_prefix_sums();
    dom.build_facets();
    dom.boundary_connected_ = dom.facets_connected();
    return dom;
  }

  /// Box [lo, hi] made of cells of size h (lo, hi multiples of h).
  static Domain box(int d, Point lo, Point hi, double h) {
    Extent e{1, 1, 1};
    for (int a = 0; a < d; ++a) e[a] = static_cast<std::int64_t>(std::llround((hi[a] - lo[a]) / h));
    return from_mask(d, h, lo, e, std::vector<std::uint8_t>(static_cast<std::size_t>(product(e, d)), 1));
  }
  static Domain unit_square() { return box(2, {0, 0, 0}, {1, 1, 0}, 1.0); }
  static Domain unit_cube() { return box(3, {0, 0, 0}, {1, 1, 1}, 1.0); }
  /// [0,1]^2 minus [1/2,1]^2 (re-entrant corner at (1/2,1/2)).
  static Domain l_shape() { return from_mask(2, 0.5, {0, 0, 0}, {2, 2, 1}, {1, 1, 1, 0}); }

  /// Same region with every cell split into factor^d cells.
  Domain refined(int factor) const {
    if (factor < 1) throw DomainError("refinement factor must be >= 1");
    Extent e = extent_;
    for (int a = 0; a < dim_; ++a) e[a] *= factor;
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(product(e, dim_)));
    for (std::int64_t n = 0; n < static_cast<std::int64_t>(mask.size()); ++n) {
      Shift i = multi_index(n, e, dim_);
      for (int a = 0; a < dim_; ++a) i[a] /= factor;
      mask[n] = occ_[linear_index(i, extent_, dim_)];
    }
    return from_mask(dim_, h_ / factor, origin_, e, std::move(mask));
  }

  int dim() const { return dim_; }
  double cell_size() const { return h_; }
  const Point& origin() const { return origin_; }
  const Extent& extent() const { return extent_; }
  const std::vector<std::uint8_t>& occupancy() const { return occ_; }
  const std::vector<Facet>& facets() const { return facets_; }
  bool boundary_connected() const { return boundary_connected_; }

  Box bounding_box() const {
    Box b{dim_, origin_, origin_};
    for (int a = 0; a < dim_; ++a) b.hi[a] = origin_[a] + static_cast<double>(extent_[a]) * h_;
    return b;
  }
  double diameter() const {
    const Box b = bounding_box();
    double s = 0;
    for (int a = 0; a < dim_; ++a) s += b.side(a) * b.side(a);
    return std::sqrt(s);
  }
  double volume() const {
    const auto n = std::count(occ_.begin(), occ_.end(), std::uint8_t{1});
    return static_cast<double>(n) * std::pow(h_, dim_);
  }

  bool cell_occupied(const Shift& c) const {
    for (int a = 0; a < dim_; ++a)
      if (c[a] < 0 || c[a] >= extent_[a]) return false;
    return occ_[static_cast<std::size_t>(linear_index(c, extent_, dim_))] != 0;
  }

  /// Point strictly inside Omega.
  bool contains(const Point& x) const { return classify(x) > 0; }
  /// Point in the closure of Omega.
  bool contains_closed(const Point& x) const { return classify(x) >= 0; }

  /// Number of occupied cells whose interior meets the open box (lo, hi).
  std::int64_t occupied_cells_meeting(const Box& b) const {
    Shift lo{0, 0, 0}, hi{0, 0, 0};
    for (int a = 0; a < dim_; ++a) {
      const double s = (b.lo[a] - origin_[a]) / h_;
      const double t = (b.hi[a] - origin_[a]) / h_;
      lo[a] = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(s)));
      hi[a] = std::min<std::int64_t>(extent_[a] - 1, static_cast<std::int64_t>(std::ceil(t)) - 1);
      if (lo[a] > hi[a]) return 0;
    }
    return prefix_query(lo, hi);
  }

  /// Unit cell faces separating an occupied from an unoccupied cell.
  std::vector<BoundaryFace> boundary_faces() const {
    std::vector<BoundaryFace> out;
    const double area = std::pow(h_, dim_ - 1);
    for (int a = 0; a < dim_; ++a) {
      Extent fe = extent_;
      fe[a] += 1;
      for (std::int64_t n = 0; n < product(fe, dim_); ++n) {
        const Shift f = multi_index(n, fe, dim_);
        Shift left = f;
        left[a] -= 1;
        const bool l = cell_occupied(left), r = cell_occupied(f);
        if (l == r) continue;
        Point c{0, 0, 0};
        for (int b = 0; b < dim_; ++b)
          c[b] = origin_[b] + (static_cast<double>(f[b]) + (b == a ? 0.0 : 0.5)) * h_;
        out.push_back({a, l ? 1 : -1, c, area});
      }
    }
    return out;
  }

 private:
  // +1 interior, 0 boundary, -1 exterior.
  int classify(const Point& x) const {
    // Cells whose closure contains x: index range per axis.
    Shift lo{0, 0, 0}, hi{0, 0, 0};
    for (int a = 0; a < dim_; ++a) {
      const double s = (x[a] - origin_[a]) / h_;
      const double f = std::floor(s);
      if (s == f) {
        lo[a] = static_cast<std::int64_t>(f) - 1;
        hi[a] = static_cast<std::int64_t>(f);
      } else {
        lo[a] = hi[a] = static_cast<std::int64_t>(f);
      }
    }
    int total = 0, occupied = 0;
    Shift c = lo;
    while (true) {
      ++total;
      occupied += cell_occupied(c) ? 1 : 0;
      int a = 0;
      for (; a < dim_; ++a) {
        if (++c[a] <= hi[a]) break;
        c[a] = lo[a];
      }
      if (a == dim_) break;
    }
    if (occupied == 0) return -1;
    return occupied == total ? 1 : 0;
  }

  bool cells_connected() const {
    const std::int64_t n = product(extent_, dim_);
    std::vector<std::uint8_t> seen(static_cast<std::size_t>(n), 0);
    std::int64_t start = -1, total = 0;
    for (std::int64_t i = 0; i < n; ++i)
      if (occ_[i]) {
        ++total;
        if (start < 0) start = i;
      }
    std::vector<std::int64_t> stack{start};
    seen[start] = 1;
    std::int64_t reached = 0;
    while (!stack.empty()) {
      const auto cur = stack.back();
      stack.pop_back();
      ++reached;
      const Shift c = multi_index(cur, extent_, dim_);
      for (int a = 0; a < dim_; ++a)
        for (int s : {-1, 1}) {
          Shift nb = c;
          nb[a] += s;
          if (!cell_occupied(nb)) continue;
          const auto idx = linear_index(nb, extent_, dim_);
          if (!seen[idx]) {
            seen[idx] = 1;
            stack.push_back(idx);
          }
        }
    }
    return reached == total;
  }

  void build_prefix_sums() {
    Extent pe = extent_;
    for (int a = 0; a < dim_; ++a) pe[a] += 1;
    prefix_extent_ = pe;
    prefix_.assign(static_cast<std::size_t>(product(pe, dim_)), 0);
    for (std::int64_t n = 0; n < product(extent_, dim_); ++n) {
      Shift i = multi_index(n, extent_, dim_);
      for (int a = 0; a < dim_; ++a) i[a] += 1;
      prefix_[linear_index(i, pe, dim_)] = occ_[n];
    }
    for (int a = 0; a < dim_; ++a) {
      for (std::int64_t n = 0; n < product(pe, dim_); ++n) {
        Shift i = multi_index(n, pe, dim_);
        if (i[a] == 0) continue;
        Shift p = i;
        p[a] -= 1;
        prefix_[n] += prefix_[linear_index(p, pe, dim_)];
      }
    }
  }

  // Occupied count over the inclusive cell range [lo, hi].
  std::int64_t prefix_query(const Shift& lo, const Shift& hi) const {
    std::int64_t total = 0;
    for (int corner = 0; corner < (1 << dim_); ++corner) {
      Shift i{0, 0, 0};
      int parity = 0;
      for (int a = 0; a < dim_; ++a) {
        if (corner & (1 << a)) {
          i[a] = lo[a];
          ++parity;
        } else {
          i[a] = hi[a] + 1;
        }
      }
      const auto v = prefix_[linear_index(i, prefix_extent_, dim_)];
      total += (parity % 2 == 0) ? v : -v;
    }
    return total;
  }

  void build_facets() {
    facets_.clear();
    for (int a = 0; a < dim_; ++a) {
      // Tangential axes.
      int t0 = -1, t1 = -1;
      for (int b = 0; b < dim_; ++b)
        if (b != a) (t0 < 0 ? t0 : t1) = b;
      for (std::int64_t plane = 0; plane <= extent_[a]; ++plane) {
        for (int sign : {-1, 1}) {
          // Mask of unit faces in this plane with this outward orientation.
          const std::int64_t n0 = extent_[t0], n1 = t1 >= 0 ? extent_[t1] : 1;
          std::vector<std::uint8_t> m(static_cast<std::size_t>(n0 * n1), 0);
          bool any = false;
          for (std::int64_t u = 0; u < n0; ++u)
            for (std::int64_t v = 0; v < n1; ++v) {
              Shift right{0, 0, 0};
              right[a] = plane;
              right[t0] = u;
              if (t1 >= 0) right[t1] = v;
              Shift left = right;
              left[a] -= 1;
              const bool l = cell_occupied(left), r = cell_occupied(right);
              const bool hit = sign > 0 ? (l && !r) : (r && !l);
              if (hit) {
                m[u + n0 * v] = 1;
                any = true;
              }
            }
          if (!any) continue;
          // Greedy rectangle cover: extend along t0, then along t1.
          for (std::int64_t v = 0; v < n1; ++v)
            for (std::int64_t u = 0; u < n0; ++u) {
              if (!m[u + n0 * v]) continue;
              std::int64_t u1 = u;
              while (u1 + 1 < n0 && m[u1 + 1 + n0 * v]) ++u1;
              std::int64_t v1 = v;
              auto row_full = [&](std::int64_t vv) {
                for (std::int64_t uu = u; uu <= u1; ++uu)
                  if (!m[uu + n0 * vv]) return false;
                return true;
              };
              while (v1 + 1 < n1 && row_full(v1 + 1)) ++v1;
              for (std::int64_t vv = v; vv <= v1; ++vv)
                for (std::int64_t uu = u; uu <= u1; ++uu) m[uu + n0 * vv] = 0;
              Facet f;
              f.axis = a;
              f.sign = sign;
              f.rect.dim = dim_;
              f.rect.lo[a] = f.rect.hi[a] = origin_[a] + static_cast<double>(plane) * h_;
              f.rect.lo[t0] = origin_[t0] + static_cast<double>(u) * h_;
              f.rect.hi[t0] = origin_[t0] + static_cast<double>(u1 + 1) * h_;
              if (t1 >= 0) {
                f.rect.lo[t1] = origin_[t1] + static_cast<double>(v) * h_;
                f.rect.hi[t1] = origin_[t1] + static_cast<double>(v1 + 1) * h_;
              }
              facets_.push_back(f);
            }
        }
      }
    }
  }

  bool facets_connected() const {
    const std::size_t n = facets_.size();
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    std::function<std::size_t(std::size_t)> find = [&](std::size_t i) {
      while (parent[i] != i) i = parent[i] = parent[parent[i]];
      return i;
    };
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (squared_distance(facets_[i].rect, facets_[j].rect) == 0.0) parent[find(i)] = find(j);
    for (std::size_t i = 1; i < n; ++i)
      if (find(i) != find(0)) return false;
    return true;
  }

  int dim_ = 2;
  double h_ = 1.0;
  Point origin_{0, 0, 0};
  Extent extent_{1, 1, 1};
  std::vector<std::uint8_t> occ_;
  Extent prefix_extent_{1, 1, 1};
  std::vector<std::int64_t> prefix_;
  std::vector<Facet> facets_;
  bool boundary_connected_ = true;
};

//-----------------------------------------------------------------------------
// Distances
//-----------------------------------------------------------------------------

/// Distance to the nearest boundary facet; positive inside Omega, negative
/// outside, zero on the boundary.
inline double signed_distance(const Domain& dom, const Point& x) {
  const Box bb = dom.bounding_box();
  for (int a = 0; a < dom.dim(); ++a)
    if (x[a] < bb.lo[a] || x[a] > bb.hi[a])
      throw DomainError(concat("point outside the bounding box along axis ", a));
  const Box p{dom.dim(), x, x};
  double best = std::numeric_limits<double>::infinity();
  for (const auto& f : dom.facets()) best = std::min(best, squared_distance(p, f.rect));
  const double r = std::sqrt(best);
  return dom.contains_closed(x) ? r : -r;
}

/// Nearest point on the boundary (ties resolved by facet order).
inline Point nearest_boundary_point(const Domain& dom, const Point& x) {
  double best = std::numeric_limits<double>::infinity();
  Point out = x;
  for (const auto& f : dom.facets()) {
    Point p{0, 0, 0};
    double s = 0;
    for (int a = 0; a < dom.dim(); ++a) {
      p[a] = std::clamp(x[a], f.rect.lo[a], f.rect.hi[a]);
      s += (p[a] - x[a]) * (p[a] - x[a]);
    }
    if (s < best) {
      best = s;
      out = p;
    }
  }
  return out;
}

/// Exact dist(box, boundary)^2 as the minimum over facets.
inline double squared_boundary_distance(const Domain& dom, const Box& b) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& f : dom.facets()) best = std::min(best, squared_distance(b, f.rect));
  return best;
}

//-----------------------------------------------------------------------------
// Dyadic cubes
//-----------------------------------------------------------------------------

/// The support cube Q = [-L, L]^d.
struct SupportCube {
  int dim = 2;
  double half_width = 1.0;

  double side() const { return 2.0 * half_width; }
};

struct DyadicCube {
  int level = 0;
  Shift shift{0, 0, 0};
  SupportCube q;

  /// 2^{-j} k + 2^{-j} Q. Exact in double for dyadic data.
  Box realize() const {
    Box b{q.dim, {0, 0, 0}, {0, 0, 0}};
    for (int a = 0; a < q.dim; ++a) {
      b.lo[a] = std::ldexp(static_cast<double>(shift[a]) - q.half_width, -level);
      b.hi[a] = std::ldexp(static_cast<double>(shift[a]) + q.half_width, -level);
    }
    return b;
  }
};

inline Box realize_cube(int j, const Shift& k, const SupportCube& q) {
  if (j < 0) throw DomainError("level must be nonnegative");
  return DyadicCube{j, k, q}.realize();
}

/// floor(sqrt(q)) for a nonnegative double, exact for q < 2^52.
inline std::int64_t floor_sqrt(double q) {
  auto m = static_cast<std::int64_t>(std::floor(std::sqrt(q)));
  while (static_cast<double>(m + 1) * static_cast<double>(m + 1) <= q) ++m;
  while (m > 0 && static_cast<double>(m) * static_cast<double>(m) > q) --m;
  return m;
}

//-----------------------------------------------------------------------------
// Index sets Gamma, Lambda_j, Lambda_{j,m}, Lambda_j^0
//-----------------------------------------------------------------------------

class IndexSetFamily {
 public:
  static constexpr std::uint16_t kAbsent = 0xFFFF;

  struct Level {
    Shift lo{0, 0, 0};
    Extent extent{1, 1, 1};
    std::vector<std::uint16_t> m_class;  // kAbsent when Q_{j,k} misses Omega
    std::vector<std::int64_t> cube_counts;  // per m
    std::int64_t cubes = 0;
  };

  int dim() const { return dim_; }
  int j_max() const { return static_cast<int>(levels_.size()) - 1; }
  int types() const { return (1 << dim_) - 1; }
  const SupportCube& support() const { return q_; }
  const std::vector<Shift>& gamma() const { return gamma_; }
  const Level& level(int j) const { return levels_.at(static_cast<std::size_t>(j)); }

  bool in_gamma(const Shift& k) const { return in_range_and_present(gamma_level_, k); }
  bool contains(int j, const Shift& k) const {
    if (j < 0 || j > j_max()) return false;
    return in_range_and_present(levels_[j], k);
  }
  /// m such that m 2^{-j} <= rho_{j,k} < (m+1) 2^{-j}; -1 if absent.
  int distance_class(int j, const Shift& k) const {
    if (!contains(j, k)) return -1;
    const auto& L = levels_[j];
    return L.m_class[index_in(L, k)];
  }
  double rho(int j, const Shift& k) const {
    return std::sqrt(squared_boundary_distance(domain_, realize_cube(j, k, q_)));
  }

  /// |Lambda_{j,m}| counting (i, j, k) triples.
  std::int64_t count(int j, int m) const {
    const auto& c = level(j).cube_counts;
    if (m < 0 || m >= static_cast<int>(c.size())) return 0;
    return c[m] * types();
  }
  std::int64_t level_count(int j) const { return level(j).cubes * types(); }
  /// |Lambda_j^0| = |Lambda_j| - |Lambda_{j,0}|.
  std::int64_t interior_count(int j) const { return level_count(j) - count(j, 0); }
  int max_class(int j) const { return static_cast<int>(level(j).cube_counts.size()) - 1; }

  /// Cube shifts of Lambda_j in lexicographic (axis-0 fastest) order.
  std::vector<Shift> members(int j) const {
    std::vector<Shift> out;
    const auto& L = level(j);
    for (std::int64_t n = 0; n < static_cast<std::int64_t>(L.m_class.size()); ++n)
      if (L.m_class[n] != kAbsent) {
        Shift k = multi_index(n, L.extent, dim_);
        for (int a = 0; a < dim_; ++a) k[a] += L.lo[a];
        out.push_back(k);
      }
    return out;
  }

  const Domain& domain() const { return domain_; }

 private:
  friend IndexSetFamily build_index_sets(const Domain&, const SupportCube&, int, std::size_t);

  std::int64_t index_in(const Level& L, const Shift& k) const {
    Shift r{0, 0, 0};
    for (int a = 0; a < dim_; ++a) r[a] = k[a] - L.lo[a];
    return linear_index(r, L.extent, dim_);
  }
  bool in_range_and_present(const Level& L, const Shift& k) const {
    for (int a = 0; a < dim_; ++a)
      if (k[a] < L.lo[a] || k[a] >= L.lo[a] + L.extent[a]) return false;
    return L.m_class[index_in(L, k)] != kAbsent;
  }

  int dim_ = 2;
  SupportCube q_;
  Domain domain_;
  std::vector<Shift> gamma_;
  Level gamma_level_;
  std::vector<Level> levels_;
};

namespace detail {

inline IndexSetFamily::Level enumerate_level(const Domain& dom, const SupportCube& q, int j) {
  const int d = dom.dim();
  const Box bb = dom.bounding_box();
  IndexSetFamily::Level L;
  for (int a = 0; a < d; ++a) {
    // Open cube 2^{-j}(k + (-L, L)) meets the open bounding box.
    const double lo = std::ldexp(bb.lo[a], j) - q.half_width;
    const double hi = std::ldexp(bb.hi[a], j) + q.half_width;
    L.lo[a] = static_cast<std::int64_t>(std::floor(lo)) + 1;
    const auto top = static_cast<std::int64_t>(std::ceil(hi)) - 1;
    L.extent[a] = top - L.lo[a] + 1;
  }
  const std::int64_t n = product(L.extent, d);
  L.m_class.assign(static_cast<std::size_t>(n), IndexSetFamily::kAbsent);
  const double scale = std::ldexp(1.0, 2 * j);
  for (std::int64_t idx = 0; idx < n; ++idx) {
    Shift k = multi_index(idx, L.extent, d);
    for (int a = 0; a < d; ++a) k[a] += L.lo[a];
    const Box cube = realize_cube(j, k, q);
    if (dom.occupied_cells_meeting(cube) == 0) continue;
    const auto m = floor_sqrt(squared_boundary_distance(dom, cube) * scale);
    if (m >= IndexSetFamily::kAbsent) throw ResourceError("distance class exceeds storage range", j - 1);
    L.m_class[idx] = static_cast<std::uint16_t>(m);
    if (static_cast<std::int64_t>(L.cube_counts.size()) <= m) L.cube_counts.resize(m + 1, 0);
    ++L.cube_counts[m];
    ++L.cubes;
  }
  return L;
}

}  // namespace detail

/// Exhaustive enumeration of Gamma and Lambda_j (j <= j_max) for cubes that
/// meet Omega. Each level stores a dense 16-bit distance-class map over its
/// shift range; `memory_budget` bounds the total.
inline IndexSetFamily build_index_sets(const Domain& dom, const SupportCube& q, int j_max,
                                       std::size_t memory_budget = std::size_t{1} << 29) {
  if (j_max < 0) throw DomainError("j_max must be nonnegative");
  if (q.dim != dom.dim()) throw DomainError("support cube dimension differs from the domain");
  IndexSetFamily fam;
  fam.dim_ = dom.dim();
  fam.q_ = q;
  fam.domain_ = dom;
  std::size_t used = 0;
  const Box bb = dom.bounding_box();
  for (int j = 0; j <= j_max; ++j) {
    std::size_t cubes = 1;
    for (int a = 0; a < dom.dim(); ++a)
      cubes *= static_cast<std::size_t>(std::ceil(std::ldexp(bb.side(a), j) + 2 * q.half_width) + 1);
    used += cubes * sizeof(std::uint16_t);
    if (used > memory_budget)
      throw ResourceError(concat("index sets for level ", j, " exceed the memory budget of ", memory_budget,
                                 " bytes; completed through level ", j - 1),
                          j - 1);
    fam.levels_.push_back(detail::enumerate_level(dom, q, j));
  }
  fam.gamma_level_ = fam.levels_[0];
  fam.gamma_ = fam.members(0);
  return fam;
}

//-----------------------------------------------------------------------------
// Boundary flux
//-----------------------------------------------------------------------------

/// Midpoint-rule quadrature of the outward flux of g over the boundary, one
/// node per boundary cell face of the domain refined by `subdivisions`.
inline double boundary_flux_integral(const Domain& dom, const std::function<Point(const Point&)>& g,
                                     int subdivisions = 1) {
  const Domain fine = subdivisions == 1 ? dom : dom.refined(subdivisions);
  NeumaierSum s;
  for (const auto& f : fine.boundary_faces()) s.add(g(f.center)[f.axis] * f.sign * f.area);
  return s.value();
}

//-----------------------------------------------------------------------------
// Domain description file
//
//   dimension 2
//   cell_size 0.5
//   origin 0 0
//   extent 2 2
//   occupancy
//   2*1
//   1 0
//   end
//
// Occupancy rows run along axis 0; rows are listed with axis 1 increasing,
// then axis 2. A token `n*v` repeats v n times.
//-----------------------------------------------------------------------------

inline Domain parse_domain(std::istream& in) {
  int d = 0;
  double h = 0;
  Point origin{0, 0, 0};
  Extent extent{1, 1, 1};
  std::vector<std::uint8_t> mask;
  bool have_origin = false, have_extent = false, in_occ = false;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    if (in_occ) {
      if (key == "end") {
        in_occ = false;
        continue;
      }
      std::int64_t row = 0;
      std::string tok = key;
      do {
        std::int64_t cnt = 1;
        std::string val = tok;
        if (const auto star = tok.find('*'); star != std::string::npos) {
          cnt = std::stoll(tok.substr(0, star));
          val = tok.substr(star + 1);
        }
        if (val != "0" && val != "1") throw InputError(concat("line ", lineno, ": occupancy values must be 0 or 1"));
        mask.insert(mask.end(), static_cast<std::size_t>(cnt), val == "1" ? 1 : 0);
        row += cnt;
      } while (ls >> tok);
      if (row != extent[0]) throw InputError(concat("line ", lineno, ": row has ", row, " cells, expected ", extent[0]));
      continue;
    }
    if (key == "dimension") {
      ls >> d;
      check_dimension(d);
    } else if (key == "cell_size") {
      ls >> h;
    } else if (key == "origin") {
      for (int a = 0; a < d; ++a) ls >> origin[a];
      have_origin = true;
    } else if (key == "extent") {
      for (int a = 0; a < d; ++a) ls >> extent[a];
      have_extent = true;
    } else if (key == "occupancy") {
      if (d == 0 || !have_extent) throw InputError("occupancy must follow dimension and extent");
      in_occ = true;
    } else {
      throw InputError(concat("line ", lineno, ": unknown key '", key, "'"));
    }
    if (ls.fail()) throw InputError(concat("line ", lineno, ": malformed value for '", key, "'"));
  }
  if (d == 0) throw InputError("missing key: dimension");
  if (h <= 0) throw InputError("missing key: cell_size");
  if (!have_extent) throw InputError("missing key: extent");
  if (!have_origin) origin = {0, 0, 0};
  return Domain::from_mask(d, h, origin, extent, std::move(mask));
}

inline Domain read_domain_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError(concat("cannot open domain file ", path));
  return parse_domain(in);
}

inline std::string format_domain(const Domain& dom) {
  std::ostringstream os;
  os.precision(17);
  const int d = dom.dim();
  os << "dimension " << d << "\ncell_size " << dom.cell_size() << "\norigin";
  for (int a = 0; a < d; ++a) os << ' ' << dom.origin()[a];
  os << "\nextent";
  for (int a = 0; a < d; ++a) os << ' ' << dom.extent()[a];
  os << "\noccupancy\n";
  const auto& occ = dom.occupancy();
  const std::int64_t nx = dom.extent()[0];
  for (std::size_t r = 0; r < occ.size(); r += static_cast<std::size_t>(nx)) {
    std::size_t i = r;
    bool first = true;
    while (i < r + static_cast<std::size_t>(nx)) {
      std::size_t j = i;
      while (j < r + static_cast<std::size_t>(nx) && occ[j] == occ[i]) ++j;
      os << (first ? "" : " ") << (j - i) << '*' << int(occ[i]);
      first = false;
      i = j;
    }
    os << '\n';
  }
  os << "end\n";
  return os.str();
}

//-----------------------------------------------------------------------------
// Index-set dumps
//-----------------------------------------------------------------------------

inline void write_index_counts_csv(std::ostream& os, const IndexSetFamily& fam) {
  os << "j,m,count\n";
  for (int j = 0; j <= fam.j_max(); ++j)
    for (int m = 0; m <= fam.max_class(j); ++m) os << j << ',' << m << ',' << fam.count(j, m) << '\n';
}

inline void write_index_members_csv(std::ostream& os, const IndexSetFamily& fam, int j_last) {
  os.precision(17);
  const int d = fam.dim();
  os << "j";
  for (int a = 0; a < d; ++a) os << ",k" << a;
  os << ",rho\n";
  for (int j = 0; j <= std::min(j_last, fam.j_max()); ++j)
    for (const auto& k : fam.members(j)) {
      os << j;
      for (int a = 0; a < d; ++a) os << ',' << k[a];
      os << ',' << fam.rho(j, k) << '\n';
    }
}

}  // namespace besov
