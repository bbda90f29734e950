#ifndef OLDNASH_NASH_HPP
#define OLDNASH_NASH_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "oldnash/rng.hpp"
#include "oldnash/solvers.hpp"

namespace oldnash {

/// Follower game data: costs J_i(v,w) = 1/2 |w_i|^2_{L2(O_i x (0,T))}
///                                    + alpha_i/2 |rho_i (u(T) - u_target)|^2_H.
struct CostParams {
  std::vector<double> alphas;
  VelocityField u_target;
  std::vector<WeightField> rho;
  std::vector<WeightField> rho_sq;
  std::vector<GridMask> masks;

  int n() const { return static_cast<int>(alphas.size()); }
  bool equal_alpha() const {
    for (double a : alphas)
      if (a != alphas.front()) return false;
    return true;
  }
  CostParams with_zero_target() const {
    CostParams c = *this;
    c.u_target.set_zero();
    return c;
  }
};

inline CostParams make_cost(std::vector<double> alphas, VelocityField target,
                            std::vector<WeightField> rho, std::vector<GridMask> masks) {
  if (alphas.empty() || alphas.size() != rho.size() || rho.size() != masks.size())
    throw Error(ErrorCode::invalid_argument, "cost: need matching alphas/rho/masks");
  for (double a : alphas)
    if (a < 0.0) throw Error(ErrorCode::invalid_argument, "cost: alphas must be >= 0");
  CostParams c;
  c.alphas = std::move(alphas);
  c.u_target = std::move(target);
  c.rho = std::move(rho);
  c.masks = std::move(masks);
  c.rho_sq.reserve(c.rho.size());
  for (const auto& r : c.rho) {
    WeightField sq = r;
    sq.data = r.data.cwiseProduct(r.data);
    c.rho_sq.push_back(std::move(sq));
  }
  return c;
}

inline double cost_J_i(int i, const ControlField& w_i, const CostParams& cost,
                       const VelocityField& state_T) {
  VelocityField diff(*state_T.grid);
  diff.data = cost.rho[i].data.cwiseProduct(state_T.data - cost.u_target.data);
  return 0.5 * control_dot(w_i, w_i) + 0.5 * cost.alphas[i] * inner_H(diff, diff);
}

// ---------------------------------------------------------------------------
// Flat packing of the follower control space H = prod_i L2(O_i x (0,T)) so
// the Krylov loop is plain vector algebra. Inner product = dt*vol*Euclidean.
// ---------------------------------------------------------------------------
struct NashWorkspace {
  const OldroydStepper* st;
  const CostParams* cost;

  const Grid& grid() const { return st->grid(); }
  int n() const { return cost->n(); }
  Eigen::Index flat_size() const {
    return static_cast<Eigen::Index>(n()) * grid().nt * grid().nfaces();
  }

  Eigen::VectorXd pack(const std::vector<ControlField>& w) const {
    const Grid& g = grid();
    Eigen::VectorXd x(flat_size());
    Eigen::Index off = 0;
    for (int i = 0; i < n(); ++i)
      for (int m = 1; m <= g.nt; ++m) {
        x.segment(off, g.nfaces()) = w[i].at[m].data;
        off += g.nfaces();
      }
    return x;
  }

  std::vector<ControlField> unpack(const Eigen::VectorXd& x) const {
    const Grid& g = grid();
    std::vector<ControlField> w(n(), ControlField::zero(g));
    Eigen::Index off = 0;
    for (int i = 0; i < n(); ++i)
      for (int m = 1; m <= g.nt; ++m) {
        w[i].at[m].data = x.segment(off, g.nfaces());
        off += g.nfaces();
      }
    return w;
  }

  /// u(T) response to the stacked follower forcing.
  VelocityField combined_terminal(const std::vector<ControlField>& w) const {
    Trajectory t = st->forward([&](int m, VelocityField& out) {
      for (const auto& wi : w) out.data += wi.at[m].data;
    });
    return t.terminal();
  }
};

/// (A w)_i = w_i + alpha_i chi_i Adj(rho_i^2 sum_j L_j w_j): the
/// Euler-Lagrange-consistent Nash operator.
inline std::vector<ControlField> apply_A(const NashWorkspace& ws,
                                         const std::vector<ControlField>& w) {
  const VelocityField uT = ws.combined_terminal(w);
  std::vector<ControlField> out = w;
  for (int i = 0; i < ws.n(); ++i) {
    if (ws.cost->alphas[i] == 0.0) continue;
    VelocityField term(ws.grid());
    term.data = ws.cost->rho_sq[i].data.cwiseProduct(uT.data);
    AdjointTrajectory adj = ws.st->adjoint(term);
    for (int m = 1; m <= ws.grid().nt; ++m)
      out[i].at[m].data += ws.cost->alphas[i] * adj.psi[m].data.cwiseProduct(ws.cost->masks[i].data);
  }
  return out;
}

/// Transpose of apply_A in the control-space inner product:
/// (A* y)_j = y_j + chi_j Adj(sum_i alpha_i rho_i^2 L_i y_i).
inline std::vector<ControlField> apply_At(const NashWorkspace& ws,
                                          const std::vector<ControlField>& y) {
  VelocityField s(ws.grid());
  bool any = false;
  for (int i = 0; i < ws.n(); ++i) {
    if (ws.cost->alphas[i] == 0.0) continue;
    Trajectory t = ws.st->forward([&](int m, VelocityField& out) { out.data += y[i].at[m].data; });
    s.data += ws.cost->alphas[i] * ws.cost->rho_sq[i].data.cwiseProduct(t.terminal().data);
    any = true;
  }
  std::vector<ControlField> out = y;
  if (!any) return out;
  AdjointTrajectory adj = ws.st->adjoint(s);
  for (int j = 0; j < ws.n(); ++j)
    for (int m = 1; m <= ws.grid().nt; ++m)
      out[j].at[m].data += adj.psi[m].data.cwiseProduct(ws.cost->masks[j].data);
  return out;
}

/// Right-hand side alpha_i chi_i Adj(rho_i^2 (u_target - z_T)) with z_T the
/// leader-only terminal state (Euler-Lagrange sign convention).
inline std::vector<ControlField> nash_rhs(const NashWorkspace& ws, const VelocityField& z_T) {
  std::vector<ControlField> b(ws.n(), ControlField::zero(ws.grid()));
  for (int i = 0; i < ws.n(); ++i) {
    if (ws.cost->alphas[i] == 0.0) continue;
    VelocityField term(ws.grid());
    term.data = ws.cost->rho_sq[i].data.cwiseProduct(ws.cost->u_target.data - z_T.data);
    AdjointTrajectory adj = ws.st->adjoint(term);
    for (int m = 1; m <= ws.grid().nt; ++m)
      b[i].at[m].data = ws.cost->alphas[i] * adj.psi[m].data.cwiseProduct(ws.cost->masks[i].data);
  }
  return b;
}

struct NashSolution {
  std::vector<ControlField> w;
  Trajectory state;
  std::vector<double> costs;
  std::vector<double> el_residual_abs;
  double el_scale = 0.0;
  double residual_rel = 0.0;
  int iterations = 0;
  std::string route;
};

struct ElResidual {
  double abs = 0.0;
  double scale = 0.0;
};

/// Norm of the discrete J_i-gradient w_i + alpha_i chi_i psi_i at the given
/// state; scale is max(|w_i|, |alpha_i chi_i psi_i|).
inline ElResidual el_residual(int i, const std::vector<ControlField>& w, const CostParams& cost,
                              const OldroydStepper& st, const VelocityField& state_T) {
  const Grid& g = st.grid();
  VelocityField term(g);
  term.data = cost.rho_sq[i].data.cwiseProduct(state_T.data - cost.u_target.data);
  AdjointTrajectory adj = st.adjoint(term);
  ControlField feedback = restrict_to(adj, cost.masks[i], cost.alphas[i]);
  ControlField grad = ControlField::zero(g);
  for (int m = 1; m <= g.nt; ++m) grad.at[m].data = w[i].at[m].data + feedback.at[m].data;
  ElResidual r;
  r.abs = control_norm(grad);
  r.scale = std::max(control_norm(w[i]), control_norm(feedback));
  return r;
}

namespace detail {

inline void finalize_nash(NashSolution& sol, const NashWorkspace& ws, const ControlField* v) {
  const Grid& g = ws.grid();
  sol.state = ws.st->forward([&](int m, VelocityField& out) {
    if (v) out.data += v->at[m].data;
    for (const auto& wi : sol.w) out.data += wi.at[m].data;
  });
  sol.costs.clear();
  sol.el_residual_abs.clear();
  sol.el_scale = 0.0;
  for (int i = 0; i < ws.n(); ++i) {
    sol.costs.push_back(cost_J_i(i, sol.w[i], *ws.cost, sol.state.terminal()));
    ElResidual r = el_residual(i, sol.w, *ws.cost, *ws.st, sol.state.terminal());
    sol.el_residual_abs.push_back(r.abs);
    sol.el_scale = std::max(sol.el_scale, r.scale);
  }
}

}  // namespace detail

struct NashOptions {
  double krylov_tol = 1e-10;
  int krylov_max_iter = 600;
  double fp_tol = 1e-12;
  int fp_max_iter = 400;
};

/// Operator route: solve A w = b by CGLS (conjugate gradient on the normal
/// equations). A is coercive for beta0 < 1 but not symmetric in general, so
/// the normal-equivalent form is the right Krylov setting.
inline NashSolution solve_nash(const OldroydStepper& st, const ControlField* v,
                               const CostParams& cost, const NashOptions& opt = {}) {
  NashWorkspace ws{&st, &cost};
  const Grid& g = st.grid();

  VelocityField z_T(g);
  if (v) {
    Trajectory t = st.forward([&](int m, VelocityField& out) { out.data += v->at[m].data; });
    z_T = t.terminal();
  }
  const Eigen::VectorXd b = ws.pack(nash_rhs(ws, z_T));

  NashSolution sol;
  sol.route = "operator";
  const double bnorm = b.norm();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(ws.flat_size());
  if (bnorm > 0.0) {
    auto apply = [&](const Eigen::VectorXd& q) { return ws.pack(apply_A(ws, ws.unpack(q))); };
    auto applyT = [&](const Eigen::VectorXd& q) { return ws.pack(apply_At(ws, ws.unpack(q))); };

    Eigen::VectorXd r = b - apply(x);
    Eigen::VectorXd s = applyT(r);
    Eigen::VectorXd p = s;
    double gamma = s.squaredNorm();
    double rel = r.norm() / bnorm;
    int it = 0;
    double prev_rel = rel;
    int stalled = 0;
    while (rel > opt.krylov_tol && it < opt.krylov_max_iter) {
      const Eigen::VectorXd q = apply(p);
      const double qq = q.squaredNorm();
      if (qq == 0.0) break;
      const double alpha = gamma / qq;
      x += alpha * p;
      r -= alpha * q;
      s = applyT(r);
      const double gamma_new = s.squaredNorm();
      p = s + (gamma_new / gamma) * p;
      gamma = gamma_new;
      rel = r.norm() / bnorm;
      ++it;
      if (rel > 0.999 * prev_rel) {
        if (++stalled > 25)
          throw Error(ErrorCode::solver_diverged,
                      "nash operator iteration stagnated at relative residual " +
                          std::to_string(rel) + " (check the beta0 certificate)");
      } else {
        stalled = 0;
      }
      prev_rel = rel;
    }
    sol.iterations = it;
    sol.residual_rel = rel;
  }
  sol.w = ws.unpack(x);
  detail::finalize_nash(sol, ws, v);
  return sol;
}

/// Optimality-system route: fixed point on the terminal state with the
/// feedback law w_i = -alpha_i psi_i on O_i substituted.
inline NashSolution solve_nash_via_optimality_system(const OldroydStepper& st,
                                                     const ControlField* v,
                                                     const CostParams& cost,
                                                     const NashOptions& opt = {}) {
  NashWorkspace ws{&st, &cost};
  const Grid& g = st.grid();
  const int N = cost.n();

  VelocityField z_T(g);
  if (v) {
    Trajectory t = st.forward([&](int m, VelocityField& out) { out.data += v->at[m].data; });
    z_T = t.terminal();
  }
  const double scale = std::max({norm_H(z_T), norm_H(cost.u_target), 1e-300});

  NashSolution sol;
  sol.route = "optimality_system";
  VelocityField u_T = z_T;
  std::vector<ControlField> w(N, ControlField::zero(g));
  double theta = 1.0;
  double prev_update = std::numeric_limits<double>::infinity();
  int grew = 0;
  for (int it = 0; it < opt.fp_max_iter; ++it) {
    for (int i = 0; i < N; ++i) {
      if (cost.alphas[i] == 0.0) continue;
      VelocityField term(g);
      term.data = cost.rho_sq[i].data.cwiseProduct(u_T.data - cost.u_target.data);
      AdjointTrajectory psi = st.adjoint(term);
      w[i] = restrict_to(psi, cost.masks[i], -cost.alphas[i]);
    }
    Trajectory state = st.forward([&](int m, VelocityField& out) {
      if (v) out.data += v->at[m].data;
      for (const auto& wi : w) out.data += wi.at[m].data;
    });
    VelocityField diff(g);
    diff.data = state.terminal().data - u_T.data;
    const double update = norm_H(diff);
    u_T.data += theta * diff.data;
    sol.iterations = it + 1;
    if (update <= opt.fp_tol * scale) {
      sol.w = std::move(w);
      sol.residual_rel = update / scale;
      detail::finalize_nash(sol, ws, v);
      return sol;
    }
    if (update > prev_update) {
      if (++grew >= 3 && theta > 0.49) {
        theta = 0.5;
        grew = 0;
      } else if (grew >= 8 || update > 1e8 * scale) {
        throw Error(ErrorCode::solver_diverged,
                    "optimality-system fixed point diverges; try the operator route");
      }
    } else {
      grew = 0;
    }
    prev_update = update;
  }
  throw Error(ErrorCode::solver_diverged, "optimality-system fixed point did not converge");
}

// ---------------------------------------------------------------------------
// Certificates.
// ---------------------------------------------------------------------------

struct Beta0Report {
  double c_tilde0 = 0.0;       // max_i ||L_i||
  double beta0 = 0.0;
  double coercivity_min = 0.0; // min sampled (Aw,w)/|w|^2
  bool equal_alpha = true;
  int power_iterations = 0;
};

/// beta0 = C0~^2 alpha max_{i,j} ||rho_i - rho_j||_inf max_i ||rho_i||_inf,
/// with C0~ from power iteration on L_i L_i* (1e-6 relative eigenvalue
/// tolerance), plus an empirical coercivity floor over random controls.
inline Beta0Report beta0_estimate(const OldroydStepper& st, const CostParams& cost, Rng& rng,
                                  int coercivity_samples = 0) {
  const Grid& g = st.grid();
  Beta0Report rep;
  rep.equal_alpha = cost.equal_alpha();
  const double alpha = *std::max_element(cost.alphas.begin(), cost.alphas.end());

  double lam_max = 0.0;
  for (int i = 0; i < cost.n(); ++i) {
    VelocityField x = white_noise(g, rng);
    x.data /= norm_H(x);
    double lam = 0.0, lam_prev = -1.0;
    int it = 0;
    for (; it < 200; ++it) {
      // y = L_i L_i* x
      AdjointTrajectory adj = st.adjoint(x);
      ControlField wc = restrict_to(adj, cost.masks[i]);
      Trajectory t = st.forward([&](int m, VelocityField& out) { out.data += wc.at[m].data; });
      VelocityField y = t.terminal();
      lam = inner_H(y, x);
      const double yn = norm_H(y);
      if (yn == 0.0) { lam = 0.0; break; }
      y.data /= yn;
      x = y;
      if (lam_prev > 0.0 && std::abs(lam - lam_prev) <= 1e-6 * lam) { ++it; break; }
      lam_prev = lam;
    }
    if (it >= 200)
      throw Error(ErrorCode::solver_diverged, "beta0: power iteration did not converge");
    rep.power_iterations += it;
    lam_max = std::max(lam_max, lam);
  }
  rep.c_tilde0 = std::sqrt(std::max(lam_max, 0.0));

  double max_diff = 0.0, max_norm = 0.0;
  for (int i = 0; i < cost.n(); ++i) {
    max_norm = std::max(max_norm, sup_norm(cost.rho[i]));
    for (int j = 0; j < cost.n(); ++j) {
      VelocityField d(g);
      d.data = cost.rho[i].data - cost.rho[j].data;
      max_diff = std::max(max_diff, sup_norm(d));
    }
  }
  rep.beta0 = rep.c_tilde0 * rep.c_tilde0 * alpha * max_diff * max_norm;

  rep.coercivity_min = std::numeric_limits<double>::infinity();
  if (coercivity_samples <= 0) {
    rep.coercivity_min = std::nan("");
    return rep;
  }
  NashWorkspace ws{&st, &cost};
  for (int s = 0; s < coercivity_samples; ++s) {
    std::vector<ControlField> w(cost.n(), ControlField::zero(g));
    for (int i = 0; i < cost.n(); ++i)
      for (int m = 1; m <= g.nt; ++m)
        w[i].at[m] = masked(white_noise(g, rng), cost.masks[i]);
    double ww = 0.0;
    for (int i = 0; i < cost.n(); ++i) ww += control_dot(w[i], w[i]);
    if (ww == 0.0) continue;
    const std::vector<ControlField> aw = apply_A(ws, w);
    double waw = 0.0;
    for (int i = 0; i < cost.n(); ++i) waw += control_dot(aw[i], w[i]);
    rep.coercivity_min = std::min(rep.coercivity_min, waw / ww);
  }
  return rep;
}

struct NashInequalityReport {
  double min_gap = 0.0;  // min over samples of J_i(perturbed) - J_i(nash)
  bool ok = true;
};

/// Spot-check of the Nash inequality (unilateral deviations never pay):
/// per follower, `samples` random directions with magnitudes log-spaced in
/// [1e-3, 1] * |w|.
inline NashInequalityReport verify_nash_inequality(const OldroydStepper& st,
                                                   const NashSolution& sol,
                                                   const ControlField* v, const CostParams& cost,
                                                   Rng& rng, int samples = 20) {
  const Grid& g = st.grid();
  NashInequalityReport rep;
  rep.min_gap = std::numeric_limits<double>::infinity();
  double wnorm = 0.0;
  for (const auto& wi : sol.w) wnorm = std::max(wnorm, control_norm(wi));
  if (wnorm == 0.0) wnorm = 1.0;

  for (int i = 0; i < cost.n(); ++i) {
    const double J_base = cost_J_i(i, sol.w[i], cost, sol.state.terminal());
    for (int s = 0; s < samples; ++s) {
      ControlField dir = ControlField::zero(g);
      for (int m = 1; m <= g.nt; ++m) dir.at[m] = masked(white_noise(g, rng), cost.masks[i]);
      const double dn = control_norm(dir);
      if (dn == 0.0) continue;
      const double mag = wnorm * std::pow(10.0, -3.0 + 3.0 * (samples == 1 ? 1.0 : double(s) / (samples - 1)));
      const double step = mag / dn;

      ControlField wi_pert = sol.w[i];
      for (int m = 1; m <= g.nt; ++m) wi_pert.at[m].data += step * dir.at[m].data;
      Trajectory t = st.forward([&](int m, VelocityField& out) {
        if (v) out.data += v->at[m].data;
        for (int jj = 0; jj < cost.n(); ++jj)
          out.data += (jj == i ? wi_pert.at[m].data : sol.w[jj].at[m].data);
      });
      const double J_pert = cost_J_i(i, wi_pert, cost, t.terminal());
      rep.min_gap = std::min(rep.min_gap, J_pert - J_base);
      if (J_pert - J_base < -1e-10 * std::max(J_base, 1.0)) rep.ok = false;
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Tracking-cost variant: followers penalize deviation from desired states on
// observation windows instead of a terminal miss.
// ---------------------------------------------------------------------------

struct TrackingParams {
  std::vector<double> alphas;
  std::vector<double> mus;
  std::vector<GridMask> omega;       // control regions
  std::vector<GridMask> omega_obs;   // observation regions
  std::vector<ControlField> u_desired;  // desired states on omega_obs slots

  int n() const { return static_cast<int>(alphas.size()); }
};

struct TrackingSolution {
  std::vector<ControlField> controls;  // v^i = -(1/mu_i) q^i on omega_i
  Trajectory state;
  double el_residual_max = 0.0;
  double el_scale = 0.0;
  int iterations = 0;
};

inline TrackingSolution solve_nash_tracking(const OldroydStepper& st, const ControlField* v,
                                            const TrackingParams& tp,
                                            const NashOptions& opt = {}) {
  const Grid& g = st.grid();
  const int N = tp.n();
  TrackingSolution sol;
  std::vector<ControlField> c(N, ControlField::zero(g));

  double data_scale = 1e-300;
  for (const auto& ud : tp.u_desired)
    data_scale = std::max(data_scale, control_norm(ud));
  if (v) data_scale = std::max(data_scale, control_norm(*v));

  std::vector<AdjointTrajectory> q(N);
  double theta = 1.0;
  double prev_update = std::numeric_limits<double>::infinity();
  int grew = 0;
  for (int it = 0; it < opt.fp_max_iter; ++it) {
    Trajectory state = st.forward([&](int m, VelocityField& out) {
      if (v) out.data += v->at[m].data;
      for (const auto& ci : c) out.data += ci.at[m].data;
    });
    double update = 0.0;
    for (int i = 0; i < N; ++i) {
      std::vector<VelocityField> src(g.nt + 1, VelocityField(g));
      for (int m = 1; m <= g.nt; ++m)
        src[m].data = tp.alphas[i] *
                      (state.u[m].data - tp.u_desired[i].at[m].data).cwiseProduct(tp.omega_obs[i].data);
      VelocityField zero_term(g);
      q[i] = st.adjoint(zero_term, &src);
      ControlField c_new = restrict_to(q[i], tp.omega[i], -1.0 / tp.mus[i]);
      for (int m = 1; m <= g.nt; ++m) {
        VelocityField d(g);
        d.data = c_new.at[m].data - c[i].at[m].data;
        update += g.dt * inner_H(d, d);
        c[i].at[m].data += theta * d.data;
      }
    }
    update = std::sqrt(update);
    sol.iterations = it + 1;
    if (update <= opt.fp_tol * data_scale) {
      sol.controls = c;
      sol.state = st.forward([&](int m, VelocityField& out) {
        if (v) out.data += v->at[m].data;
        for (const auto& ci : c) out.data += ci.at[m].data;
      });
      // Euler-Lagrange residual of the tracking costs: mu_i c_i + chi q_i.
      for (int i = 0; i < N; ++i) {
        std::vector<VelocityField> src(g.nt + 1, VelocityField(g));
        for (int m = 1; m <= g.nt; ++m)
          src[m].data = tp.alphas[i] * (sol.state.u[m].data - tp.u_desired[i].at[m].data)
                            .cwiseProduct(tp.omega_obs[i].data);
        VelocityField zero_term(g);
        AdjointTrajectory qi = st.adjoint(zero_term, &src);
        ControlField grad = ControlField::zero(g);
        for (int m = 1; m <= g.nt; ++m)
          grad.at[m].data = tp.mus[i] * c[i].at[m].data +
                            qi.psi[m].data.cwiseProduct(tp.omega[i].data);
        sol.el_residual_max = std::max(sol.el_residual_max, control_norm(grad));
        sol.el_scale = std::max({sol.el_scale, tp.mus[i] * control_norm(c[i]), 1.0e-300});
      }
      return sol;
    }
    if (update > prev_update) {
      if (++grew >= 3 && theta > 0.49) {
        theta = 0.5;
        grew = 0;
      } else if (grew >= 8 || update > 1e8 * data_scale) {
        throw Error(ErrorCode::solver_diverged, "tracking fixed point diverges");
      }
    } else {
      grew = 0;
    }
    prev_update = update;
  }
  throw Error(ErrorCode::solver_diverged, "tracking fixed point did not converge");
}

}  // namespace oldnash

#endif
