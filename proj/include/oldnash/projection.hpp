#ifndef OLDNASH_PROJECTION_HPP
#define OLDNASH_PROJECTION_HPP

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <vector>

#include "oldnash/grid.hpp"

namespace oldnash {

// Orthogonal projection onto the discrete divergence-free subspace:
// P f = f - grad(phi) with div(grad(phi)) = div(f), zero-mean pressure gauge
// imposed through a Lagrange multiplier row so the factorization is
// nonsingular and deterministic.
class LerayProjector {
 public:
  explicit LerayProjector(const Grid& g) : grid_(&g) {
    const int nc = g.ncells();
    const int n = nc + 1;
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<size_t>(5 * nc + 2 * nc));
    const double ax = 1.0 / (g.hx * g.hx), ay = 1.0 / (g.hy * g.hy);
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i) {
        const int c = g.ic(i, j);
        double diag = 0.0;
        if (i > 0) { trip.emplace_back(c, g.ic(i - 1, j), -ax); diag += ax; }
        if (i < g.nx - 1) { trip.emplace_back(c, g.ic(i + 1, j), -ax); diag += ax; }
        if (j > 0) { trip.emplace_back(c, g.ic(i, j - 1), -ay); diag += ay; }
        if (j < g.ny - 1) { trip.emplace_back(c, g.ic(i, j + 1), -ay); diag += ay; }
        trip.emplace_back(c, c, diag);
      }
    for (int c = 0; c < nc; ++c) {
      trip.emplace_back(nc, c, 1.0);
      trip.emplace_back(c, nc, 1.0);
    }
    Eigen::SparseMatrix<double> A(n, n);
    A.setFromTriplets(trip.begin(), trip.end());
    A.makeCompressed();
    lu_.compute(A);
    if (lu_.info() != Eigen::Success)
      throw Error(ErrorCode::factorization_failed, "leray: singular pressure solve");
  }

  VelocityField project(const VelocityField& f) const {
    const Grid& g = *grid_;
    if (!f.grid || !f.grid->same_as(g))
      throw Error(ErrorCode::grid_mismatch, "leray: field grid mismatch");
    const PressureField d = divergence(f);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(g.ncells() + 1);
    // div(grad phi) = div(f) and grad phi here follow the sign convention of
    // the assembled matrix (which is -div grad, SPD on zero-mean).
    rhs.head(g.ncells()) = -d.data;
    Eigen::VectorXd sol = lu_.solve(rhs);
    PressureField phi(g);
    phi.data = sol.head(g.ncells());
    VelocityField out(g);
    out.data = f.data - gradient(phi).data;
    return out;
  }

  const Grid& grid() const { return *grid_; }

 private:
  const Grid* grid_;
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu_;
};

inline VelocityField random_divfree(const Grid& g, Rng& rng, const LerayProjector& proj) {
  return proj.project(white_noise(g, rng));
}

}  // namespace oldnash

#endif
