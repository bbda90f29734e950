#ifndef OLDNASH_DIAGNOSTICS_HPP
#define OLDNASH_DIAGNOSTICS_HPP

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <cmath>
#include <vector>

#include "oldnash/leader.hpp"

namespace oldnash {

// Runtime monitors: the a-priori estimates and structural identities as
// quantified checks. Everything here reports; nothing mutates solver state.

struct EnergyReport {
  std::vector<double> kinetic;       // |u_m|^2_H
  std::vector<double> seminorm;      // ||u_m||^2 (H1_0)
  std::vector<double> memory_term;   // (mem_m, u_m)_H
  std::vector<double> balance_residual;  // relative, per step
  double balance_max = 0.0;
  double gronwall_ratio = 0.0;  // max_m |u_m|^2 / (e^T |u_0|^2)
  bool gronwall_ok = true;
  bool monotone = true;  // |u_m| nonincreasing (expected when gamma = 0, unforced)
};

/// Verifies the discrete energy identity of the forward scheme on an
/// unforced trajectory,
///   |u_m|^2 - |u_{m-1}|^2 + |u_m - u_{m-1}|^2 + 2 dt mu ||u_m||^2
///     - 2 dt (mem_m, u_m)_H = 0,
/// (exact up to factorization roundoff, well inside the quadrature-order
/// tolerance) plus the Gronwall-type bound max |u_m|^2 <= e^T |u_0|^2.
inline EnergyReport energy_monitor(const Trajectory& traj, const KernelParams& kp) {
  const Grid& g = *traj.grid;
  EnergyReport rep;
  const int nt = static_cast<int>(traj.u.size()) - 1;
  rep.kinetic.push_back(inner_H(traj.u[0], traj.u[0]));
  rep.seminorm.push_back(h1_seminorm_sq(traj.u[0]));
  rep.memory_term.push_back(0.0);
  for (int m = 1; m <= nt; ++m) {
    const double e = inner_H(traj.u[m], traj.u[m]);
    const double s = h1_seminorm_sq(traj.u[m]);
    const double zm = m < static_cast<int>(traj.mem.size()) ? inner_H(traj.mem[m], traj.u[m]) : 0.0;
    VelocityField d(g);
    d.data = traj.u[m].data - traj.u[m - 1].data;
    const double res = e - rep.kinetic.back() + inner_H(d, d) + 2 * g.dt * kp.mu * s - 2 * g.dt * zm;
    const double scale = std::max({e, rep.kinetic.back(), 1e-300});
    rep.kinetic.push_back(e);
    rep.seminorm.push_back(s);
    rep.memory_term.push_back(zm);
    rep.balance_residual.push_back(std::abs(res) / scale);
    rep.balance_max = std::max(rep.balance_max, rep.balance_residual.back());
    if (e > rep.kinetic[m - 1] * (1.0 + 1e-13)) rep.monotone = false;
  }
  const double ref = std::exp(g.t_final) * rep.kinetic[0];
  double emax = 0.0;
  for (double e : rep.kinetic) emax = std::max(emax, e);
  rep.gronwall_ratio = ref > 0.0 ? emax / ref : (emax > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
  rep.gronwall_ok = rep.gronwall_ratio <= 1.0 + 1e-12;
  return rep;
}

/// Same Gronwall check for a backward sweep: max_m |psi_m|^2 against
/// e^T |terminal data|^2.
inline EnergyReport energy_monitor_adjoint(const AdjointTrajectory& adj) {
  const Grid& g = *adj.grid;
  EnergyReport rep;
  const double ref = std::exp(g.t_final) * inner_H(adj.terminal_data, adj.terminal_data);
  double emax = 0.0;
  for (int m = 1; m <= g.nt; ++m) {
    const double e = inner_H(adj.psi[m], adj.psi[m]);
    rep.kinetic.push_back(e);
    emax = std::max(emax, e);
  }
  rep.gronwall_ratio = ref > 0.0 ? emax / ref : (emax > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
  rep.gronwall_ok = rep.gronwall_ratio <= 1.0 + 1e-12;
  return rep;
}

struct SmallnessReport {
  double c0_sq = 0.0;    // discrete embedding constant: |u|^2 <= c0_sq ||u||^2
  double c1 = 0.0;       // 2N (Cauchy-Schwarz + Young)
  double c_grw = 0.0;    // 2 T e^T (per-step energy estimate + Gronwall)
  double beta = 0.0;
  bool beta_positive = false;
  double lhs = std::nan("");  // sum ||xi_i(T)||^2 measured
  double rhs = std::nan("");  // 2 c_grw/(beta mu) sum alpha_i^2 |f|^2
  bool bound_ok = true;
  int power_iterations = 0;
};

/// Discrete smallness certificate
///   beta = 1 - c0_sq C1(N) (sum ||rho_i||_inf^4) (sum alpha_i^2) c_grw / mu
/// with every constant computable on the grid, and (when a coupled-pair run
/// is supplied) the resulting terminal bound.
inline SmallnessReport appendix_smallness_check(const OldroydStepper& st, const CostParams& cost,
                                                const VelocityField* f = nullptr,
                                                const LeaderPair* pair = nullptr) {
  const Grid& g = st.grid();
  SmallnessReport rep;

  // c0_sq = lambda_max((-Lap)^{-1}) by power iteration on the factorized
  // face Laplacian.
  const int nf = g.nfaces();
  std::vector<Eigen::Triplet<double>> trip;
  for (int j = 0; j < g.ny; ++j)
    for (int i = 1; i < g.nx; ++i) {
      const int row = g.iu(i, j);
      for_each_lap_entry_u(g, i, j, [&](int col, double c) { trip.emplace_back(row, col, -c); });
    }
  for (int j = 1; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      const int row = g.iv(i, j);
      for_each_lap_entry_v(g, i, j, [&](int col, double c) { trip.emplace_back(row, col, -c); });
    }
  Eigen::SparseMatrix<double> A(nf, nf);
  A.setFromTriplets(trip.begin(), trip.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(A);
  if (ldlt.info() != Eigen::Success)
    throw Error(ErrorCode::factorization_failed, "smallness: Laplacian factorization failed");
  Eigen::VectorXd x = Eigen::VectorXd::Ones(nf);
  x /= x.norm();
  double lam = 0.0, lam_prev = -1.0;
  for (int it = 0; it < 500; ++it) {
    Eigen::VectorXd ynew = ldlt.solve(x);
    lam = x.dot(ynew);
    ynew /= ynew.norm();
    x = ynew;
    ++rep.power_iterations;
    if (lam_prev > 0.0 && std::abs(lam - lam_prev) <= 1e-8 * lam) break;
    lam_prev = lam;
  }
  rep.c0_sq = lam;

  const int N = cost.n();
  rep.c1 = 2.0 * N;
  rep.c_grw = 2.0 * g.t_final * std::exp(g.t_final);
  double sum_rho4 = 0.0, sum_a2 = 0.0;
  for (int i = 0; i < N; ++i) {
    const double r = sup_norm(cost.rho[i]);
    sum_rho4 += r * r * r * r;
    sum_a2 += cost.alphas[i] * cost.alphas[i];
  }
  rep.beta = 1.0 - rep.c0_sq * rep.c1 * sum_rho4 * sum_a2 * rep.c_grw / st.kernel().mu;
  rep.beta_positive = rep.beta > 0.0;

  if (f && pair) {
    rep.lhs = 0.0;
    for (const auto& xi : pair->xi) rep.lhs += h1_seminorm_sq(xi.terminal());
    rep.rhs = rep.beta_positive
                  ? 2.0 * rep.c_grw / (rep.beta * st.kernel().mu) * sum_a2 * inner_H(*f, *f)
                  : std::numeric_limits<double>::infinity();
    rep.bound_ok = rep.beta_positive && rep.lhs <= rep.rhs;
  }
  return rep;
}

/// Discrete Fubini symmetry of the memory double sum: with trapezoid weights
/// w_{mj} and g exponential,
///   sum_m dt sum_{j<=m} w_{mj} g(t_m-t_j)(Lap a_j, b_m)
///     = sum_j dt sum_{m>=j} w_{mj} g(t_m-t_j)(Lap b_m, a_j).
inline double fubini_check(const KernelParams& kp, const Grid& g, int n_trials, Rng& rng) {
  double worst = 0.0;
  for (int trial = 0; trial < n_trials; ++trial) {
    std::vector<VelocityField> a, b, lap_a, lap_b;
    for (int m = 0; m <= g.nt; ++m) {
      a.push_back(white_noise(g, rng));
      b.push_back(white_noise(g, rng));
      lap_a.push_back(laplacian(a.back()));
      lap_b.push_back(laplacian(b.back()));
    }
    auto weight = [&](int m, int j) {
      const double w = (j == 0 || j == m) ? 0.5 : 1.0;
      return g.dt * w * eval_kernel(kp, (m - j) * g.dt);
    };
    double s1 = 0.0, s2 = 0.0;
    for (int m = 1; m <= g.nt; ++m)
      for (int j = 0; j <= m; ++j) {
        s1 += g.dt * weight(m, j) * inner_H(lap_a[j], b[m]);
        s2 += g.dt * weight(m, j) * inner_H(lap_b[m], a[j]);
      }
    const double res = std::abs(s1 - s2) / std::max({std::abs(s1), std::abs(s2), 1e-300});
    worst = std::max(worst, res);
  }
  return worst;
}

struct AdjointIdentityReport {
  double max_rel = 0.0;
  std::vector<double> per_trial;
};

/// The central duality check: for random leader controls v and random
/// divergence-free f, the zero-target optimality state satisfies
///   (u(T), f)_H = sum_m (v_m, chi_O phi_m)_H dt
/// with phi from the coupled leader-adjoint pair.
inline AdjointIdentityReport adjoint_identity_check(const OldroydStepper& st,
                                                    const LerayProjector& proj,
                                                    const GridMask& leader_mask,
                                                    const CostParams& cost, int n_trials,
                                                    Rng& rng) {
  const Grid& g = st.grid();
  const CostParams cost0 = cost.with_zero_target();
  AdjointIdentityReport rep;
  for (int trial = 0; trial < n_trials; ++trial) {
    ControlField v = ControlField::zero(g);
    for (int m = 1; m <= g.nt; ++m) v.at[m] = masked(white_noise(g, rng), leader_mask);
    VelocityField f = proj.project(white_noise(g, rng));
    f.data /= norm_H(f);

    NashSolution sol = solve_nash_via_optimality_system(st, &v, cost0);
    const double lhs = inner_H(sol.state.terminal(), f);

    LeaderPair pair = solve_leader_adjoint_pair(st, f, cost0.alphas, cost0.rho_sq, cost0.masks);
    const double rhs = control_dot(v, restrict_to(pair.phi, leader_mask));

    const double scale = control_norm(v) * norm_H(f);
    const double rel = std::abs(lhs - rhs) / std::max({std::abs(lhs), std::abs(rhs), 1e-3 * scale});
    rep.per_trial.push_back(rel);
    rep.max_rel = std::max(rep.max_rel, rel);
  }
  return rep;
}

}  // namespace oldnash

#endif
