#ifndef OLDNASH_GRID_HPP
#define OLDNASH_GRID_HPP

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <vector>

#include "oldnash/error.hpp"
#include "oldnash/rng.hpp"

namespace oldnash {

// Staggered (MAC) layout on a rectangle with homogeneous Dirichlet velocity.
// Only interior faces carry unknowns; boundary-normal faces are pinned to
// zero, which makes the discrete div/grad pair exactly adjoint and the Leray
// decomposition exactly orthogonal. Tangential no-slip enters the Laplacian
// through ghost elimination (ghost = -first interior value), which only
// touches the diagonal and keeps the operator symmetric.

struct GridSpec {
  int nx = 16;
  int ny = 16;
  double lx = 1.0;
  double ly = 1.0;
  int nt = 16;
  double t_final = 1.0;
};

struct Grid {
  int nx, ny;
  double lx, ly, hx, hy;
  int nt;
  double t_final, dt;

  int nu() const { return (nx - 1) * ny; }        // interior x-normal faces
  int nv() const { return nx * (ny - 1); }        // interior y-normal faces
  int nfaces() const { return nu() + nv(); }
  int ncells() const { return nx * ny; }
  double face_vol() const { return hx * hy; }

  // u-face (i,j): i in 1..nx-1, j in 0..ny-1, center (i*hx, (j+1/2)*hy)
  int iu(int i, int j) const { return j * (nx - 1) + (i - 1); }
  // v-face (i,j): i in 0..nx-1, j in 1..ny-1, center ((i+1/2)*hx, j*hy)
  int iv(int i, int j) const { return nu() + (j - 1) * nx + i; }
  int ic(int i, int j) const { return j * nx + i; }

  double xu(int i) const { return i * hx; }
  double yu(int j) const { return (j + 0.5) * hy; }
  double xv(int i) const { return (i + 0.5) * hx; }
  double yv(int j) const { return j * hy; }

  bool same_as(const Grid& o) const {
    return nx == o.nx && ny == o.ny && lx == o.lx && ly == o.ly && nt == o.nt &&
           t_final == o.t_final;
  }
};

inline Grid build_grid(const GridSpec& s) {
  if (s.nx < 4 || s.ny < 4)
    throw Error(ErrorCode::invalid_argument, "grid too coarse: need nx,ny >= 4");
  if (s.nt < 2) throw Error(ErrorCode::invalid_argument, "need nt >= 2");
  if (!(s.lx > 0.0) || !(s.ly > 0.0) || !(s.t_final > 0.0))
    throw Error(ErrorCode::invalid_argument, "domain lengths and horizon must be positive");
  Grid g;
  g.nx = s.nx;
  g.ny = s.ny;
  g.lx = s.lx;
  g.ly = s.ly;
  g.hx = s.lx / s.nx;
  g.hy = s.ly / s.ny;
  g.nt = s.nt;
  g.t_final = s.t_final;
  g.dt = s.t_final / s.nt;
  return g;
}

/// Velocity degrees of freedom on interior faces, u-part then v-part.
struct VelocityField {
  const Grid* grid = nullptr;
  Eigen::VectorXd data;

  VelocityField() = default;
  explicit VelocityField(const Grid& g) : grid(&g), data(Eigen::VectorXd::Zero(g.nfaces())) {}

  double& u(int i, int j) { return data[grid->iu(i, j)]; }
  double& v(int i, int j) { return data[grid->iv(i, j)]; }
  double u(int i, int j) const { return data[grid->iu(i, j)]; }
  double v(int i, int j) const { return data[grid->iv(i, j)]; }

  void set_zero() { data.setZero(); }
  bool finite() const { return data.allFinite(); }
};

struct PressureField {
  const Grid* grid = nullptr;
  Eigen::VectorXd data;

  PressureField() = default;
  explicit PressureField(const Grid& g) : grid(&g), data(Eigen::VectorXd::Zero(g.ncells())) {}
};

// Masks and follower weights live at the same face locations as velocities,
// one value per component location.
using GridMask = VelocityField;
using WeightField = VelocityField;

inline void require_same_grid(const VelocityField& a, const VelocityField& b) {
  if (!a.grid || !b.grid || !a.grid->same_as(*b.grid))
    throw Error(ErrorCode::grid_mismatch, "fields live on different grids");
}

/// (a,b)_H: face-volume-weighted inner product.
inline double inner_H(const VelocityField& a, const VelocityField& b) {
  require_same_grid(a, b);
  return a.grid->face_vol() * a.data.dot(b.data);
}

inline double norm_H(const VelocityField& a) { return std::sqrt(inner_H(a, a)); }

inline double inner_cells(const PressureField& a, const PressureField& b) {
  return a.grid->face_vol() * a.data.dot(b.data);
}

/// Axis-aligned open rectangle in domain coordinates.
struct Region {
  double x0 = 0, x1 = 0, y0 = 0, y1 = 0;

  bool contains(double x, double y) const { return x > x0 && x < x1 && y > y0 && y < y1; }
  bool covers(const Region& o) const {
    return x0 <= o.x0 && x1 >= o.x1 && y0 <= o.y0 && y1 >= o.y1;
  }
  bool overlaps(const Region& o) const {
    return x0 < o.x1 && o.x0 < x1 && y0 < o.y1 && o.y0 < y1;
  }
  bool empty() const { return !(x0 < x1 && y0 < y1); }
};

inline void require_inside_domain(const Region& r, const Grid& g, const char* what) {
  if (r.x1 < r.x0 || r.y1 < r.y0 || r.x0 < 0 || r.y0 < 0 || r.x1 > g.lx || r.y1 > g.ly)
    throw Error(ErrorCode::region_violation,
                std::string(what) + ": region must sit inside the domain closure");
}

/// Characteristic function sampled at face centers (1 strictly inside).
inline GridMask indicator(const Region& r, const Grid& g) {
  require_inside_domain(r, g, "indicator");
  GridMask m(g);
  for (int j = 0; j < g.ny; ++j)
    for (int i = 1; i < g.nx; ++i)
      if (r.contains(g.xu(i), g.yu(j))) m.data[g.iu(i, j)] = 1.0;
  for (int j = 1; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i)
      if (r.contains(g.xv(i), g.yv(j))) m.data[g.iv(i, j)] = 1.0;
  return m;
}

namespace detail {
// 1 on [c0,c1], 0 outside (s0,s1), cosine taper in the bands. Degenerate
// bands reduce to the strict indicator so that core==support matches
// indicator(core) exactly.
inline double taper_axis(double x, double s0, double c0, double c1, double s1) {
  if (x <= s0 || x >= s1) return 0.0;
  if (x < c0) return 0.5 * (1.0 - std::cos(M_PI * (x - s0) / (c0 - s0)));
  if (x > c1) return 0.5 * (1.0 - std::cos(M_PI * (s1 - x) / (s1 - c1)));
  return 1.0;
}
}  // namespace detail

/// rho = 1 on core, 0 outside support, cosine taper in between.
inline WeightField make_weight(const Region& core, const Region& support, const Grid& g) {
  require_inside_domain(support, g, "make_weight");
  if (!support.covers(core))
    throw Error(ErrorCode::region_violation, "make_weight: core must be contained in support");
  WeightField w(g);
  auto value = [&](double x, double y) {
    return std::min(detail::taper_axis(x, support.x0, core.x0, core.x1, support.x1),
                    detail::taper_axis(y, support.y0, core.y0, core.y1, support.y1));
  };
  for (int j = 0; j < g.ny; ++j)
    for (int i = 1; i < g.nx; ++i) w.data[g.iu(i, j)] = value(g.xu(i), g.yu(j));
  for (int j = 1; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) w.data[g.iv(i, j)] = value(g.xv(i), g.yv(j));
  return w;
}

inline double sup_norm(const VelocityField& a) { return a.data.lpNorm<Eigen::Infinity>(); }

// ---------------------------------------------------------------------------
// Discrete operators. (grad p, u)_faces = -(p, div u)_cells holds exactly.
// ---------------------------------------------------------------------------

inline PressureField divergence(const VelocityField& f) {
  const Grid& g = *f.grid;
  PressureField d(g);
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      const double ul = (i == 0) ? 0.0 : f.u(i, j);
      const double ur = (i == g.nx - 1) ? 0.0 : f.u(i + 1, j);
      const double vb = (j == 0) ? 0.0 : f.v(i, j);
      const double vt = (j == g.ny - 1) ? 0.0 : f.v(i, j + 1);
      d.data[g.ic(i, j)] = (ur - ul) / g.hx + (vt - vb) / g.hy;
    }
  return d;
}

inline VelocityField gradient(const PressureField& p) {
  const Grid& g = *p.grid;
  VelocityField out(g);
  for (int j = 0; j < g.ny; ++j)
    for (int i = 1; i < g.nx; ++i)
      out.u(i, j) = (p.data[g.ic(i, j)] - p.data[g.ic(i - 1, j)]) / g.hx;
  for (int j = 1; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i)
      out.v(i, j) = (p.data[g.ic(i, j)] - p.data[g.ic(i, j - 1)]) / g.hy;
  return out;
}

// Enumerates the (column, coefficient) pairs of one Laplacian row. Shared by
// the matrix-free apply and the sparse/dense assemblies so they can never
// drift apart.
template <class F>
void for_each_lap_entry_u(const Grid& g, int i, int j, F&& emit) {
  const double ax = 1.0 / (g.hx * g.hx), ay = 1.0 / (g.hy * g.hy);
  double diag = -2.0 * ax - 2.0 * ay;
  if (i > 1) emit(g.iu(i - 1, j), ax);
  if (i < g.nx - 1) emit(g.iu(i + 1, j), ax);
  if (j > 0) emit(g.iu(i, j - 1), ay); else diag -= ay;  // no-slip ghost
  if (j < g.ny - 1) emit(g.iu(i, j + 1), ay); else diag -= ay;
  emit(g.iu(i, j), diag);
}

template <class F>
void for_each_lap_entry_v(const Grid& g, int i, int j, F&& emit) {
  const double ax = 1.0 / (g.hx * g.hx), ay = 1.0 / (g.hy * g.hy);
  double diag = -2.0 * ax - 2.0 * ay;
  if (j > 1) emit(g.iv(i, j - 1), ay);
  if (j < g.ny - 1) emit(g.iv(i, j + 1), ay);
  if (i > 0) emit(g.iv(i - 1, j), ax); else diag -= ax;  // no-slip ghost
  if (i < g.nx - 1) emit(g.iv(i + 1, j), ax); else diag -= ax;
  emit(g.iv(i, j), diag);
}

/// Componentwise 5-point vector Laplacian with no-slip walls.
inline VelocityField laplacian(const VelocityField& f) {
  const Grid& g = *f.grid;
  VelocityField out(g);
  for (int j = 0; j < g.ny; ++j)
    for (int i = 1; i < g.nx; ++i) {
      double acc = 0.0;
      for_each_lap_entry_u(g, i, j, [&](int col, double c) { acc += c * f.data[col]; });
      out.data[g.iu(i, j)] = acc;
    }
  for (int j = 1; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      double acc = 0.0;
      for_each_lap_entry_v(g, i, j, [&](int col, double c) { acc += c * f.data[col]; });
      out.data[g.iv(i, j)] = acc;
    }
  return out;
}

/// Discrete H^1_0 seminorm squared (Dirichlet form of the Laplacian).
inline double h1_seminorm_sq(const VelocityField& f) {
  return -inner_H(laplacian(f), f);
}

inline VelocityField masked(const VelocityField& f, const GridMask& m) {
  require_same_grid(f, m);
  VelocityField out(*f.grid);
  out.data = f.data.cwiseProduct(m.data);
  return out;
}

inline VelocityField white_noise(const Grid& g, Rng& rng) {
  VelocityField f(g);
  for (int k = 0; k < g.nfaces(); ++k) f.data[k] = rng.normal();
  return f;
}

}  // namespace oldnash

#endif
