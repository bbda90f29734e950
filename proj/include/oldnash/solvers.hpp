#ifndef OLDNASH_SOLVERS_HPP
#define OLDNASH_SOLVERS_HPP

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "oldnash/kernel.hpp"
#include "oldnash/stokes.hpp"

namespace oldnash {

enum class MemoryScheme { ode, trapezoid };

/// Forward-in-time solve: velocity snapshots at steps 0..nt plus the memory
/// term actually used by each final solve (handy for energy balances).
struct Trajectory {
  const Grid* grid = nullptr;
  std::vector<VelocityField> u;
  std::vector<VelocityField> mem;
  double max_step_residual = 0.0;

  const VelocityField& terminal() const { return u.back(); }
};

/// Backward sweep output. psi[m] pairs with the forcing slot m (m = 1..nt);
/// psi[0] is kept zero since no forcing acts at t = 0.
struct AdjointTrajectory {
  const Grid* grid = nullptr;
  std::vector<VelocityField> psi;
  VelocityField terminal_data;
};

/// Time-indexed field on forcing slots 1..nt (controls, extracted adjoints).
struct ControlField {
  std::vector<VelocityField> at;  // size nt+1, slot 0 zero and unused

  static ControlField zero(const Grid& g) {
    ControlField c;
    c.at.assign(g.nt + 1, VelocityField(g));
    return c;
  }
};

inline double control_dot(const ControlField& a, const ControlField& b) {
  const Grid& g = *a.at[1].grid;
  double acc = 0.0;
  for (int m = 1; m <= g.nt; ++m) acc += inner_H(a.at[m], b.at[m]);
  return g.dt * acc;
}

inline double control_norm(const ControlField& a) { return std::sqrt(control_dot(a, a)); }

/// Leader control v on O plus follower controls w_i on O_i, stored masked.
struct ControlSet {
  ControlField v;
  std::vector<ControlField> w;
};

// ---------------------------------------------------------------------------
// Time integrator for the memory-Stokes systems.
//
// Forward step n -> n+1 (implicit Euler diffusion, memory on the rhs with one
// predictor/corrector pass; the corrector freezes Lap(u) at the average of
// the left endpoint and the predicted right endpoint):
//
//   base     = u_n/dt + F_{n+1}
//   ode:     z*      = E z_n + a Lap(u_n),            E = e^{-delta dt},
//            u*      = S(base + z*),                  a = gamma (1-E)/delta
//            z_{n+1} = E z_n + (a/2)(Lap(u_n) + Lap(u*))
//            u_{n+1} = S(base + z_{n+1})
//   trap:    hist    = dt [ g(t_{n+1})/2 Lap(u_0) + sum_{j=1..n} g(t_{n+1}-t_j) Lap(u_j) ]
//            u*      = S(base + hist + c Lap(u_n)),   c = dt gamma / 2
//            u_{n+1} = S(base + hist + c Lap(u*))
//
// The backward sweeps below are the exact algebraic transposes of these
// recursions (derived by a discrete Lagrangian), run with reversed time
// index. They satisfy, for every forcing F and terminal datum f,
//
//   (u_nt(F), f)_H + sum_m (u_m(F), s_m)_H dt = sum_m (F_m, psi_m)_H dt
//
// to factorization roundoff, which is what makes the duality identities of
// the Nash and leader layers exact on the grid.
// ---------------------------------------------------------------------------
class OldroydStepper {
 public:
  OldroydStepper(const Grid& g, const KernelParams& kp, MemoryScheme scheme, const SaddleOp& sd)
      : grid_(&g), kp_(kp), scheme_(scheme), sd_(&sd) {
    decay_ = std::exp(-kp_.delta * g.dt);
    ode_w_ = kp_.gamma * (-std::expm1(-kp_.delta * g.dt)) / kp_.delta;
    trap_c_ = 0.5 * g.dt * kp_.gamma;
  }

  const Grid& grid() const { return *grid_; }
  const KernelParams& kernel() const { return kp_; }
  MemoryScheme scheme() const { return scheme_; }
  const SaddleOp& saddle() const { return *sd_; }

  /// add_forcing(m, out) accumulates the slot-m forcing into out, m = 1..nt.
  Trajectory forward(const std::function<void(int, VelocityField&)>& add_forcing,
                     const VelocityField* u0 = nullptr) const {
    const Grid& g = *grid_;
    const double dt = g.dt;
    const bool memory = kp_.gamma != 0.0;

    Trajectory traj;
    traj.grid = &g;
    traj.u.reserve(g.nt + 1);
    traj.u.push_back(u0 ? *u0 : VelocityField(g));
    traj.mem.assign(1, VelocityField(g));

    std::vector<VelocityField> lap_hist;  // trapezoid scheme only
    if (memory && scheme_ == MemoryScheme::trapezoid) {
      lap_hist.reserve(g.nt + 1);
      lap_hist.push_back(laplacian(traj.u[0]));
    }

    VelocityField z(g);  // ode auxiliary state
    for (int n = 0; n < g.nt; ++n) {
      VelocityField force(g);
      add_forcing(n + 1, force);
      VelocityField base(g);
      base.data = traj.u[n].data / dt + force.data;

      VelocityField mem_term(g);
      if (memory) {
        if (scheme_ == MemoryScheme::ode) {
          const VelocityField lap_n = laplacian(traj.u[n]);
          VelocityField zpred(g);
          zpred.data = decay_ * z.data + ode_w_ * lap_n.data;
          VelocityField rhs(g);
          rhs.data = base.data + zpred.data;
          const VelocityField upred = sd_->apply_S(rhs);
          z.data = decay_ * z.data + 0.5 * ode_w_ * (lap_n.data + laplacian(upred).data);
          mem_term = z;
        } else {
          VelocityField hist = trap_history(lap_hist, n + 1);
          VelocityField rhs(g);
          rhs.data = base.data + hist.data + trap_c_ * lap_hist[n].data;
          const VelocityField upred = sd_->apply_S(rhs);
          mem_term.data = hist.data + trap_c_ * laplacian(upred).data;
        }
      }

      VelocityField rhs(g);
      rhs.data = base.data + mem_term.data;
      auto [unext, pnext] = sd_->step(rhs);
      if (!unext.finite())
        throw Error(ErrorCode::solver_nan, "forward solve produced NaN/Inf at step " +
                                               std::to_string(n + 1));
      track_residual(traj, unext, pnext, rhs);
      if (memory && scheme_ == MemoryScheme::trapezoid) lap_hist.push_back(laplacian(unext));
      traj.u.push_back(std::move(unext));
      traj.mem.push_back(std::move(mem_term));
    }
    return traj;
  }

  /// Exact transpose of forward(): given terminal datum f and optional
  /// distributed sources s_m (slots 1..nt), returns psi with
  /// (u(T), f)_H + sum (u_m, s_m)_H dt = sum (F_m, psi_m)_H dt for all F.
  AdjointTrajectory adjoint(const VelocityField& terminal,
                            const std::vector<VelocityField>* sources = nullptr) const {
    return (kp_.gamma != 0.0 && scheme_ == MemoryScheme::trapezoid)
               ? adjoint_trap(terminal, sources)
               : adjoint_ode(terminal, sources);
  }

 private:
  VelocityField trap_history(const std::vector<VelocityField>& lap_hist, int target) const {
    const Grid& g = *grid_;
    VelocityField hist(g);
    const double tm = target * g.dt;
    hist.data = 0.5 * g.dt * eval_kernel(kp_, tm) * lap_hist[0].data;
    for (int j = 1; j < target; ++j)
      hist.data += g.dt * eval_kernel(kp_, tm - j * g.dt) * lap_hist[j].data;
    return hist;
  }

  void track_residual(Trajectory& traj, const VelocityField& u, const PressureField& p,
                      const VelocityField& rhs) const {
    VelocityField res(*grid_);
    res.data = u.data / grid_->dt - kp_.mu * laplacian(u).data + gradient(p).data - rhs.data;
    const double scale = std::max(norm_H(rhs), 1e-300);
    traj.max_step_residual = std::max(traj.max_step_residual, norm_H(res) / scale);
  }

  AdjointTrajectory adjoint_ode(const VelocityField& terminal,
                                const std::vector<VelocityField>* sources) const {
    const Grid& g = *grid_;
    const int N = g.nt;
    const double dt = g.dt;
    const double a = kp_.gamma != 0.0 ? ode_w_ : 0.0;
    const double E = decay_;

    AdjointTrajectory adj;
    adj.grid = &g;
    adj.psi.assign(N + 1, VelocityField(g));
    adj.terminal_data = terminal;

    auto source_at = [&](int m) -> const VelocityField* {
      if (!sources) return nullptr;
      return &(*sources)[m];
    };

    VelocityField lambda(g);
    lambda.data = terminal.data;
    if (const auto* s = source_at(N)) lambda.data += dt * s->data;

    VelocityField s_lambda = sd_->apply_S(lambda);
    VelocityField zeta = s_lambda;
    VelocityField s_dzeta(g);
    if (a != 0.0) s_dzeta = sd_->apply_S(laplacian(zeta));
    adj.psi[N].data = s_lambda.data + 0.5 * a * s_dzeta.data;

    for (int m = N - 1; m >= 1; --m) {
      VelocityField lam(g);
      lam.data = s_lambda.data / dt;
      if (a != 0.0) {
        lam.data += (0.5 * a / dt) * s_dzeta.data;
        lam.data += (0.5 * a * a) * laplacian(s_dzeta).data;
        lam.data += 0.5 * a * laplacian(zeta).data;
      }
      if (const auto* s = source_at(m)) lam.data += dt * s->data;

      VelocityField s_lam = sd_->apply_S(lam);
      VelocityField zeta_new(g);
      zeta_new.data = s_lam.data + E * zeta.data + 0.5 * a * E * s_dzeta.data;
      VelocityField s_dzeta_new(g);
      if (a != 0.0) s_dzeta_new = sd_->apply_S(laplacian(zeta_new));
      adj.psi[m].data = s_lam.data + 0.5 * a * s_dzeta_new.data;

      s_lambda = std::move(s_lam);
      zeta = std::move(zeta_new);
      s_dzeta = std::move(s_dzeta_new);
    }
    for (int m = 1; m <= N; ++m) adj.psi[m].data /= dt;
    return adj;
  }

  AdjointTrajectory adjoint_trap(const VelocityField& terminal,
                                 const std::vector<VelocityField>* sources) const {
    const Grid& g = *grid_;
    const int N = g.nt;
    const double dt = g.dt;
    const double c = trap_c_;
    const double E = decay_;

    AdjointTrajectory adj;
    adj.grid = &g;
    adj.psi.assign(N + 1, VelocityField(g));
    adj.terminal_data = terminal;

    auto source_at = [&](int m) -> const VelocityField* {
      return sources ? &(*sources)[m] : nullptr;
    };

    VelocityField lambda(g);
    lambda.data = terminal.data;
    if (const auto* s = source_at(N)) lambda.data += dt * s->data;

    VelocityField s_lambda = sd_->apply_S(lambda);
    VelocityField w = sd_->apply_S(laplacian(s_lambda));
    VelocityField phi(g);
    phi.data = s_lambda.data + c * w.data;
    adj.psi[N] = phi;

    VelocityField run(g);  // exponentially discounted sum of Lap(phi) ahead
    for (int m = N - 1; m >= 1; --m) {
      run.data = E * (laplacian(phi).data + run.data);
      VelocityField lam(g);
      lam.data = phi.data / dt + (c * c) * laplacian(w).data + dt * kp_.gamma * run.data;
      if (const auto* s = source_at(m)) lam.data += dt * s->data;

      s_lambda = sd_->apply_S(lam);
      w = sd_->apply_S(laplacian(s_lambda));
      phi.data = s_lambda.data + c * w.data;
      adj.psi[m] = phi;
    }
    for (int m = 1; m <= N; ++m) adj.psi[m].data /= dt;
    return adj;
  }

  const Grid* grid_;
  KernelParams kp_;
  MemoryScheme scheme_;
  const SaddleOp* sd_;
  double decay_, ode_w_, trap_c_;
};

// ---------------------------------------------------------------------------
// Named systems.
// ---------------------------------------------------------------------------

/// State equation driven by the leader and all followers.
inline Trajectory solve_forward(const OldroydStepper& st, const ControlSet& c) {
  return st.forward([&](int m, VelocityField& out) {
    if (!c.v.at.empty()) out.data += c.v.at[m].data;
    for (const auto& wi : c.w) out.data += wi.at[m].data;
  });
}

/// Follower sensitivity: the state response to a single follower control.
/// On the divergence-free subspace the (1/N) pressure prefactor is a gauge
/// choice only, so this is the plain forward solve with one active control.
inline Trajectory solve_follower_sensitivity(const OldroydStepper& st, const ControlField& w_i) {
  return st.forward([&](int m, VelocityField& out) { out.data += w_i.at[m].data; });
}

/// Follower adjoint: backward system with terminal datum. Gradient parts of
/// the terminal field are annihilated by the first saddle solve, which is
/// exactly the Leray projection required by the weak formulation.
inline AdjointTrajectory solve_follower_adjoint(const OldroydStepper& st,
                                                const VelocityField& terminal) {
  return st.adjoint(terminal);
}

struct LeaderPair {
  AdjointTrajectory phi;
  std::vector<Trajectory> xi;
  int iterations = 0;
  double final_update = 0.0;
};

struct FixedPointOptions {
  double tol = 1e-10;
  int max_iter = 400;
  double beta_hint = std::nan("");  // Appendix smallness estimate, for messages
};

/// Coupled leader-adjoint pair: phi backward with terminal f + sum rho_i^2
/// xi_i(T); xi_i forward driven by -alpha_i phi restricted to O_i. Solved by
/// fixed-point iteration on the terminal coupling, undamped first, halving
/// the step when the update norm grows.
inline LeaderPair solve_leader_adjoint_pair(const OldroydStepper& st, const VelocityField& f,
                                            const std::vector<double>& alphas,
                                            const std::vector<WeightField>& rho_sq,
                                            const std::vector<GridMask>& masks,
                                            const FixedPointOptions& opt = {}) {
  const Grid& g = st.grid();
  const int N = static_cast<int>(alphas.size());
  const double fnorm = std::max(norm_H(f), 1e-300);

  std::vector<VelocityField> xi_T(N, VelocityField(g));
  LeaderPair out;
  double theta = 1.0;
  double prev_update = std::numeric_limits<double>::infinity();
  int grew = 0;

  for (int it = 0; it < opt.max_iter; ++it) {
    VelocityField h = f;
    for (int i = 0; i < N; ++i) h.data += rho_sq[i].data.cwiseProduct(xi_T[i].data);

    AdjointTrajectory phi = st.adjoint(h);
    std::vector<Trajectory> xi;
    xi.reserve(N);
    double update = 0.0;
    for (int i = 0; i < N; ++i) {
      xi.push_back(st.forward([&](int m, VelocityField& outf) {
        outf.data -= alphas[i] * phi.psi[m].data.cwiseProduct(masks[i].data);
      }));
      VelocityField diff(g);
      diff.data = xi.back().terminal().data - xi_T[i].data;
      update += inner_H(diff, diff);
      xi_T[i].data += theta * diff.data;
    }
    update = std::sqrt(update);
    out.iterations = it + 1;
    if (update <= opt.tol * fnorm) {
      out.phi = std::move(phi);
      out.xi = std::move(xi);
      out.final_update = update;
      return out;
    }
    if (update > prev_update) {
      if (++grew >= 3 && theta > 0.49) {
        theta = 0.5;  // damp on oscillation
        grew = 0;
      } else if (grew >= 8 || update > 1e8 * fnorm) {
        std::string msg = "smallness condition violated: terminal coupling diverges";
        if (!std::isnan(opt.beta_hint))
          msg += " (appendix beta estimate " + std::to_string(opt.beta_hint) + ")";
        throw Error(ErrorCode::solver_diverged, msg);
      }
    } else {
      grew = 0;
    }
    prev_update = update;
  }
  throw Error(ErrorCode::solver_diverged,
              "leader-adjoint pair fixed point did not converge in " +
                  std::to_string(opt.max_iter) + " iterations");
}

/// chi_O * psi extraction used by the control laws w_i = -alpha_i psi_i and
/// v = phi restricted to O.
inline ControlField restrict_to(const AdjointTrajectory& adj, const GridMask& mask,
                                double factor = 1.0) {
  const Grid& g = *adj.grid;
  ControlField c = ControlField::zero(g);
  for (int m = 1; m <= g.nt; ++m)
    c.at[m].data = factor * adj.psi[m].data.cwiseProduct(mask.data);
  return c;
}

}  // namespace oldnash

#endif
