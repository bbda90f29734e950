#ifndef OLDNASH_STOKES_HPP
#define OLDNASH_STOKES_HPP

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <memory>
#include <utility>
#include <vector>

#include "oldnash/grid.hpp"

namespace oldnash {

// One implicit step of the (memory-)Stokes operator:
//   (1/dt) u - mu*Lap(u) + grad p = rhs,   div u = 0,   mean(p) = 0.
// Assembled once per (grid, dt, mu) as a symmetric indefinite saddle system
// with a zero-mean gauge row, factorized by sparse LU and reused.
//
// The induced solve map S : rhs -> u is symmetric, annihilates discrete
// gradients and returns divergence-free fields; every duality identity in
// the backward solvers leans on exactly these three facts.
class SaddleOp {
 public:
  SaddleOp(const Grid& g, double dt, double mu) : grid_(&g), dt_(dt), mu_(mu) {
    if (!(dt > 0.0) || !(mu > 0.0))
      throw Error(ErrorCode::invalid_argument, "saddle assembly needs dt, mu > 0");
    const int nf = g.nfaces(), nc = g.ncells();
    const int n = nf + nc + 1;
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<size_t>(7 * nf + 4 * nf + 2 * nc));

    auto add_velocity_row = [&](int row, auto&& stencil) {
      stencil([&](int col, double c) {
        double val = -mu_ * c;
        if (col == row) val += 1.0 / dt_;
        trip.emplace_back(row, col, val);
      });
    };
    for (int j = 0; j < g.ny; ++j)
      for (int i = 1; i < g.nx; ++i)
        add_velocity_row(g.iu(i, j), [&](auto&& emit) { for_each_lap_entry_u(g, i, j, emit); });
    for (int j = 1; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i)
        add_velocity_row(g.iv(i, j), [&](auto&& emit) { for_each_lap_entry_v(g, i, j, emit); });

    // Gradient block and its transpose (the divergence constraint).
    auto couple = [&](int face, int cell, double c) {
      trip.emplace_back(face, nf + cell, c);
      trip.emplace_back(nf + cell, face, c);
    };
    for (int j = 0; j < g.ny; ++j)
      for (int i = 1; i < g.nx; ++i) {
        couple(g.iu(i, j), g.ic(i, j), 1.0 / g.hx);
        couple(g.iu(i, j), g.ic(i - 1, j), -1.0 / g.hx);
      }
    for (int j = 1; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i) {
        couple(g.iv(i, j), g.ic(i, j), 1.0 / g.hy);
        couple(g.iv(i, j), g.ic(i, j - 1), -1.0 / g.hy);
      }
    for (int c = 0; c < nc; ++c) {
      trip.emplace_back(n - 1, nf + c, 1.0);
      trip.emplace_back(nf + c, n - 1, 1.0);
    }

    mat_.resize(n, n);
    mat_.setFromTriplets(trip.begin(), trip.end());
    mat_.makeCompressed();
    lu_ = std::make_shared<Eigen::SparseLU<Eigen::SparseMatrix<double>>>();
    lu_->compute(mat_);
    if (lu_->info() != Eigen::Success)
      throw Error(ErrorCode::factorization_failed, "saddle factorization failed (gauge broken?)");
  }

  std::pair<VelocityField, PressureField> step(const VelocityField& rhs) const {
    const Grid& g = *grid_;
    if (!rhs.grid || !rhs.grid->same_as(g))
      throw Error(ErrorCode::grid_mismatch, "stokes_step: rhs grid mismatch");
    Eigen::VectorXd b = Eigen::VectorXd::Zero(mat_.rows());
    b.head(g.nfaces()) = rhs.data;
    Eigen::VectorXd x = lu_->solve(b);
    VelocityField u(g);
    u.data = x.head(g.nfaces());
    PressureField p(g);
    p.data = x.segment(g.nfaces(), g.ncells());
    return {std::move(u), std::move(p)};
  }

  /// Velocity part only.
  VelocityField apply_S(const VelocityField& rhs) const { return step(rhs).first; }

  const Eigen::SparseMatrix<double>& matrix() const { return mat_; }
  const Grid& grid() const { return *grid_; }
  double dt() const { return dt_; }
  double mu() const { return mu_; }

 private:
  const Grid* grid_;
  double dt_, mu_;
  Eigen::SparseMatrix<double> mat_;
  std::shared_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>> lu_;
};

}  // namespace oldnash

#endif
