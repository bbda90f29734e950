#ifndef OLDNASH_LEADER_HPP
#define OLDNASH_LEADER_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "oldnash/nash.hpp"
#include "oldnash/projection.hpp"

namespace oldnash {

// Leader's approximate-controllability problem, HUM-style. The dual variable
// f drives the coupled adjoint pair; the Gramian chains
//   f -> (phi, xi) -> v = phi|_O -> Nash optimality state -> u(T)
// with the zero-target follower game embedded, so Lambda = L L* is exactly
// self-adjoint PSD on the grid. A nonzero follower target only shifts the
// affine part: with r = u(T; v=0) under the real game, the dual functional
// uses the effective target y = u_target - r, which is the paper's
// translation argument carried out explicitly.
struct LeaderProblem {
  const OldroydStepper* st = nullptr;
  const LerayProjector* proj = nullptr;
  GridMask leader_mask;
  CostParams cost;    // real follower game
  CostParams cost0;   // zero-target copy used inside the Gramian
  double eps = 0.0;
  double tol_accept = 1e-2;
  VelocityField offset_r;  // u(T; v = 0) under the real game
  VelocityField y;         // effective dual target
  NashOptions nash_opt;
  FixedPointOptions pair_opt;
};

inline LeaderProblem make_leader_problem(const OldroydStepper& st, const LerayProjector& proj,
                                         const GridMask& leader_mask, const CostParams& cost,
                                         double eps, const Beta0Report* beta0 = nullptr) {
  if (!(eps > 0.0)) throw Error(ErrorCode::invalid_argument, "leader: eps must be positive");
  if (beta0 && beta0->beta0 >= 1.0)
    throw Error(ErrorCode::invalid_argument,
                "leader: beta0 >= 1, Nash uniqueness (and hence the Gramian) is not certified");
  LeaderProblem p;
  p.st = &st;
  p.proj = &proj;
  p.leader_mask = leader_mask;
  p.cost = cost;
  p.cost0 = cost.with_zero_target();
  p.eps = eps;
  NashSolution at_zero = solve_nash_via_optimality_system(st, nullptr, cost, p.nash_opt);
  p.offset_r = at_zero.state.terminal();
  p.y = VelocityField(st.grid());
  p.y.data = cost.u_target.data - p.offset_r.data;
  return p;
}

struct GramianOut {
  VelocityField lambda_f;  // u(T) of the homogeneous chain
  ControlField v;          // phi restricted to O
  double phi_sq = 0.0;     // int_{O x (0,T)} phi^2 = (Lambda f, f) by duality
};

inline GramianOut gramian_apply(const LeaderProblem& p, const VelocityField& f) {
  LeaderPair pair = solve_leader_adjoint_pair(*p.st, f, p.cost.alphas, p.cost.rho_sq,
                                              p.cost.masks, p.pair_opt);
  GramianOut out;
  out.v = restrict_to(pair.phi, p.leader_mask);
  out.phi_sq = control_dot(out.v, out.v);
  NashSolution sol = solve_nash_via_optimality_system(*p.st, &out.v, p.cost0, p.nash_opt);
  out.lambda_f = sol.state.terminal();
  return out;
}

/// F(f) = 1/2 (Lambda f, f) + eps |f| - (f, y).
inline double dual_functional_F(const LeaderProblem& p, const VelocityField& f,
                                const VelocityField& lambda_f) {
  return 0.5 * inner_H(lambda_f, f) + p.eps * norm_H(f) - inner_H(f, p.y);
}

inline double dual_functional_F(const LeaderProblem& p, const VelocityField& f) {
  return dual_functional_F(p, f, gramian_apply(p, f).lambda_f);
}

struct LeaderSolution {
  VelocityField f_star;
  ControlField v_star;
  VelocityField u_final;   // real-game terminal state at v_star
  double distance = 0.0;   // |u_final - u_target|_H
  double leader_cost = 0.0;
  double dual_value = 0.0;
  double gap = 0.0;        // leader_cost + dual_value
  double grad_norm = 0.0;
  int iterations = 0;
  std::vector<double> stage_gaps;
  bool feasible = false;
};

struct DualMinimizeOptions {
  double grad_tol_factor = 1e-8;             // * max(1, |u_target|)
  std::vector<double> smoothing = {1.0, 0.1, 0.01, 0.0};  // * |y|
  int max_iter_per_stage = 800;
  bool throw_on_infeasible = true;
};

namespace detail {

// Exact 1-d minimization of t -> 1/2 (L(f+td), f+td) + eps sqrt(|f+td|^2+h^2)
// - (f+td, y): convex, solved by safeguarded Newton on the derivative.
inline double dual_line_search(double lf_d, double ld_d, double f_d, double d_d, double f_f,
                               double y_d, double eps, double hsq) {
  auto dphi = [&](double t) {
    const double nf = std::sqrt(std::max(f_f + 2 * t * f_d + t * t * d_d, 0.0) + hsq);
    const double rad = nf > 0.0 ? eps * (f_d + t * d_d) / nf : 0.0;
    return lf_d + t * ld_d + rad - y_d;
  };
  double lo = 0.0, hi = 1.0;
  double dlo = dphi(0.0);
  if (dlo >= 0.0) return 0.0;
  while (dphi(hi) < 0.0 && hi < 1e18) hi *= 2.0;
  double t = std::min(hi, std::max(lo, -dlo / std::max(ld_d, 1e-300)));
  for (int k = 0; k < 80; ++k) {
    const double d = dphi(t);
    if (d > 0.0) hi = t; else lo = t;
    const double nf = std::sqrt(std::max(f_f + 2 * t * f_d + t * t * d_d, 0.0) + hsq);
    double curv = ld_d;
    if (nf > 0.0) {
      const double num = f_d + t * d_d;
      curv += eps * (d_d / nf - num * num / (nf * nf * nf));
    }
    double tn = t - d / std::max(curv, 1e-300);
    if (!(tn > lo && tn < hi)) tn = 0.5 * (lo + hi);
    if (std::abs(tn - t) <= 1e-14 * std::max(1.0, std::abs(t))) { t = tn; break; }
    t = tn;
  }
  return t;
}

}  // namespace detail

/// Minimize F by nonlinear CG with smoothing continuation on the eps|f| term
/// (stages eta = {1, 0.1, 0.01} * |y|, then the exact functional, which is
/// smooth away from f = 0). Recovers v* = phi|_O and certifies feasibility
/// against the real follower game.
inline LeaderSolution minimize_dual(const LeaderProblem& p, const DualMinimizeOptions& opt = {},
                                    const VelocityField* warm_start = nullptr) {
  const Grid& g = p.st->grid();
  LeaderSolution sol;
  const double ynorm = norm_H(p.y);
  const double gtol = opt.grad_tol_factor * std::max(1.0, norm_H(p.cost.u_target));

  auto finish = [&](VelocityField f, int iters) {
    sol.f_star = std::move(f);
    GramianOut go = gramian_apply(p, sol.f_star);
    sol.v_star = go.v;
    NashSolution final_sol = solve_nash_via_optimality_system(*p.st, &sol.v_star, p.cost,
                                                              p.nash_opt);
    sol.u_final = final_sol.state.terminal();
    VelocityField err(g);
    err.data = sol.u_final.data - p.cost.u_target.data;
    sol.distance = norm_H(err);
    sol.leader_cost = 0.5 * control_dot(sol.v_star, sol.v_star);
    sol.dual_value = dual_functional_F(p, sol.f_star, go.lambda_f);
    sol.gap = sol.leader_cost + sol.dual_value;
    sol.iterations = iters;
    sol.feasible = sol.distance <= p.eps * (1.0 + p.tol_accept);
    if (!sol.feasible && opt.throw_on_infeasible)
      throw Error(ErrorCode::solver_diverged,
                  "dual minimization failed: |u(T)-u_target| = " + std::to_string(sol.distance) +
                      " > eps(1+tol) = " + std::to_string(p.eps * (1.0 + p.tol_accept)) +
                      ", gap = " + std::to_string(sol.gap));
    return sol;
  };

  if (ynorm <= p.eps) return finish(VelocityField(g), 0);

  VelocityField f = warm_start ? *warm_start : VelocityField(g);
  VelocityField lambda_f(g);
  ControlField v_f;
  if (norm_H(f) > 0.0) {
    GramianOut go = gramian_apply(p, f);
    lambda_f = go.lambda_f;
    v_f = go.v;
  } else {
    v_f = ControlField::zero(g);
  }

  int total_iters = 0;
  for (double eta_rel : opt.smoothing) {
    const double eta = eta_rel * ynorm;
    const double hsq = eta * eta;
    if (eta == 0.0 && norm_H(f) <= 1e-13 * std::max(1.0, ynorm)) break;

    VelocityField grad(g);
    auto eval_grad = [&]() {
      const double nf = std::sqrt(inner_H(f, f) + hsq);
      grad.data = lambda_f.data - p.y.data;
      if (nf > 0.0) grad.data += (p.eps / nf) * f.data;
      return norm_H(grad);
    };

    double gnorm = eval_grad();
    VelocityField dir(g);
    dir.data = -grad.data;
    VelocityField grad_prev = grad;
    int stage_it = 0;
    while (gnorm > gtol && stage_it < opt.max_iter_per_stage) {
      GramianOut gd = gramian_apply(p, dir);
      const double t = detail::dual_line_search(
          inner_H(lambda_f, dir), inner_H(gd.lambda_f, dir), inner_H(f, dir),
          inner_H(dir, dir), inner_H(f, f), inner_H(p.y, dir), p.eps, hsq);
      if (t == 0.0) {  // restart along steepest descent
        dir.data = -grad.data;
        GramianOut gd2 = gramian_apply(p, dir);
        const double t2 = detail::dual_line_search(
            inner_H(lambda_f, dir), inner_H(gd2.lambda_f, dir), inner_H(f, dir),
            inner_H(dir, dir), inner_H(f, f), inner_H(p.y, dir), p.eps, hsq);
        if (t2 == 0.0) break;
        f.data += t2 * dir.data;
        lambda_f.data += t2 * gd2.lambda_f.data;
        for (int m = 1; m <= g.nt; ++m) v_f.at[m].data += t2 * gd2.v.at[m].data;
      } else {
        f.data += t * dir.data;
        lambda_f.data += t * gd.lambda_f.data;
        for (int m = 1; m <= g.nt; ++m) v_f.at[m].data += t * gd.v.at[m].data;
      }
      grad_prev = grad;
      gnorm = eval_grad();
      // Polak-Ribiere+ with automatic restart.
      const double gp = inner_H(grad_prev, grad_prev);
      double beta = 0.0;
      if (gp > 0.0) {
        VelocityField diff(g);
        diff.data = grad.data - grad_prev.data;
        beta = std::max(0.0, inner_H(grad, diff) / gp);
      }
      dir.data = -grad.data + beta * dir.data;
      if (inner_H(dir, grad) >= 0.0) dir.data = -grad.data;
      ++stage_it;
      ++total_iters;
    }
    sol.grad_norm = gnorm;
    // Stage diagnostics: unsmoothed dual value + primal cost at the current f.
    sol.stage_gaps.push_back(0.5 * control_dot(v_f, v_f) + dual_functional_F(p, f, lambda_f));
  }
  return finish(std::move(f), total_iters);
}

inline double duality_gap(const LeaderSolution& s) { return s.gap; }

struct ViReport {
  double min_lhs = 0.0;
  double scale = 1.0;
  bool pass = true;
};

/// Samples the variational inequality
///   (u(T)-u_target, fhat - f*)_H + eps|fhat| - eps|f*| >= 0
/// at fhat = 0, fhat = 2 f*, and white-noise divergence-free fields scaled
/// across {0.1, 1, 10} * |f*|.
inline ViReport check_variational_inequality(const LeaderProblem& p, const LeaderSolution& sol,
                                             int n_samples, Rng& rng) {
  const Grid& g = p.st->grid();
  VelocityField err(g);
  err.data = sol.u_final.data - p.cost.u_target.data;
  const double fnorm = norm_H(sol.f_star);
  const double base = fnorm > 0.0 ? fnorm : std::max(norm_H(p.y), 1.0);

  ViReport rep;
  rep.min_lhs = std::numeric_limits<double>::infinity();
  double max_sample = 0.0;
  auto lhs_at = [&](const VelocityField& fhat) {
    VelocityField d(g);
    d.data = fhat.data - sol.f_star.data;
    return inner_H(err, d) + p.eps * norm_H(fhat) - p.eps * fnorm;
  };
  auto record = [&](const VelocityField& fhat) {
    max_sample = std::max(max_sample, norm_H(fhat));
    rep.min_lhs = std::min(rep.min_lhs, lhs_at(fhat));
  };

  record(VelocityField(g));  // fhat = 0
  VelocityField twice(g);
  twice.data = 2.0 * sol.f_star.data;
  record(twice);
  const double scales[3] = {0.1, 1.0, 10.0};
  for (int s = 0; s < n_samples; ++s) {
    VelocityField fhat = p.proj->project(white_noise(g, rng));
    const double n = norm_H(fhat);
    if (n == 0.0) continue;
    fhat.data *= scales[s % 3] * base / n;
    record(fhat);
  }
  rep.scale = (p.eps + sol.distance) * (1.0 + std::max(fnorm, max_sample));
  rep.pass = rep.min_lhs >= -1e-6 * rep.scale;
  return rep;
}

struct SweepRow {
  double eps = 0.0;
  double distance = 0.0;
  double leader_cost = 0.0;
  double gap = 0.0;
  double vi_min = 0.0;
  int iters = 0;
  bool ok = false;
  std::string error;
};

/// Runs minimize_dual over a decreasing list of radii, warm-starting each row
/// from the previous optimizer. Failures are recorded and the sweep goes on.
inline std::vector<SweepRow> controllability_sweep(const OldroydStepper& st,
                                                   const LerayProjector& proj,
                                                   const GridMask& leader_mask,
                                                   const CostParams& cost,
                                                   const std::vector<double>& eps_list,
                                                   int vi_samples, Rng& rng) {
  for (size_t k = 1; k < eps_list.size(); ++k)
    if (!(eps_list[k] < eps_list[k - 1]) || !(eps_list[k] > 0.0))
      throw Error(ErrorCode::invalid_argument, "sweep: eps_list must be strictly decreasing > 0");

  std::vector<SweepRow> rows;
  VelocityField warm;
  bool have_warm = false;
  for (double eps : eps_list) {
    SweepRow row;
    row.eps = eps;
    try {
      LeaderProblem p = make_leader_problem(st, proj, leader_mask, cost, eps);
      LeaderSolution sol = minimize_dual(p, {}, have_warm ? &warm : nullptr);
      row.distance = sol.distance;
      row.leader_cost = sol.leader_cost;
      row.gap = sol.gap;
      row.iters = sol.iterations;
      ViReport vi = check_variational_inequality(p, sol, vi_samples, rng);
      row.vi_min = vi.min_lhs;
      row.ok = sol.feasible && vi.pass;
      warm = sol.f_star;
      have_warm = true;
    } catch (const Error& e) {
      row.ok = false;
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace oldnash

#endif
