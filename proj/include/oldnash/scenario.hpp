#ifndef OLDNASH_SCENARIO_HPP
#define OLDNASH_SCENARIO_HPP

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "oldnash/checkpoint.hpp"
#include "oldnash/config.hpp"
#include "oldnash/diagnostics.hpp"
#include "oldnash/report.hpp"

namespace oldnash {

// Everything a subcommand needs, built once from (config, seed). The members
// hold pointers into each other, so the context is pinned in memory.
struct ScenarioContext {
  ScenarioConfig cfg;
  Grid grid;
  KernelParams kp;
  std::unique_ptr<SaddleOp> saddle;
  std::unique_ptr<LerayProjector> proj;
  std::unique_ptr<OldroydStepper> stepper;
  GridMask leader_mask;
  CostParams cost;
  ControlField leader_v;

  ScenarioContext(const ScenarioContext&) = delete;
  ScenarioContext& operator=(const ScenarioContext&) = delete;

  explicit ScenarioContext(const ScenarioConfig& c) : cfg(c) {
    require_seed(cfg);
    grid = build_grid(cfg.grid);
    kp = kernel_params(cfg.nu, cfg.k, cfg.lambda);
    saddle = std::make_unique<SaddleOp>(grid, grid.dt, kp.mu);
    proj = std::make_unique<LerayProjector>(grid);
    stepper = std::make_unique<OldroydStepper>(grid, kp, cfg.scheme, *saddle);
    leader_mask = indicator(cfg.leader_region, grid);

    std::vector<GridMask> masks;
    std::vector<WeightField> rhos;
    for (size_t i = 0; i < cfg.followers.size(); ++i) {
      masks.push_back(indicator(cfg.followers[i], grid));
      rhos.push_back(make_weight(cfg.cores[i], cfg.supports[i], grid));
    }

    Rng root(cfg.seed);
    Rng target_rng = root.fork(1);
    Rng control_rng = root.fork(2);

    VelocityField target(grid);
    if (cfg.target == TargetSource::reachable) {
      ControlField vbar = random_control(leader_mask, target_rng);
      Trajectory t = stepper->forward([&](int m, VelocityField& out) { out.data += vbar.at[m].data; });
      target = t.terminal();
      target.data /= norm_H(target);
    } else if (cfg.target == TargetSource::random) {
      target = proj->project(white_noise(grid, target_rng));
      target.data /= norm_H(target);
    }
    cost = make_cost(cfg.alphas, std::move(target), std::move(rhos), std::move(masks));

    leader_v = ControlField::zero(grid);
    if (cfg.leader_control == LeaderControlSource::random) {
      leader_v = random_control(leader_mask, control_rng);
      const double n = control_norm(leader_v);
      if (n > 0.0)
        for (int m = 1; m <= grid.nt; ++m) leader_v.at[m].data /= n;
    }
  }

  ControlField random_control(const GridMask& mask, Rng& rng) const {
    ControlField c = ControlField::zero(grid);
    for (int m = 1; m <= grid.nt; ++m) c.at[m] = masked(white_noise(grid, rng), mask);
    return c;
  }

  Rng rng_for(std::uint64_t tag) const {
    Rng root(cfg.seed);
    return root.fork(tag);
  }
};

namespace detail {

inline Json scenario_summary(const ScenarioContext& ctx) {
  Json j;
  j["nx"] = ctx.grid.nx;
  j["ny"] = ctx.grid.ny;
  j["nt"] = ctx.grid.nt;
  j["t_final"] = ctx.grid.t_final;
  j["nu"] = ctx.kp.nu;
  j["k"] = ctx.kp.k;
  j["lambda"] = ctx.kp.lambda;
  j["mu"] = ctx.kp.mu;
  j["gamma"] = ctx.kp.gamma;
  j["delta"] = ctx.kp.delta;
  j["followers"] = ctx.cost.n();
  j["memory_scheme"] = ctx.cfg.scheme == MemoryScheme::ode ? "ode" : "trapezoid";
  j["seed"] = ctx.cfg.seed;
  return j;
}

inline void add_check(Json& checks, const std::string& name, double value, double tol,
                      bool pass, bool& all_pass) {
  Json c;
  c["value"] = value;
  c["tolerance"] = tol;
  c["pass"] = pass;
  checks[name] = c;
  all_pass = all_pass && pass;
}

}  // namespace detail

/// `verify`: the diagnostics battery; exit 0 iff every check passes.
inline int run_verify(const ScenarioContext& ctx, const std::string& out_dir) {
  const Grid& g = ctx.grid;
  Json checks;
  bool all_pass = true;

  {
    Rng rng = ctx.rng_for(10);
    AdjointIdentityReport rep = adjoint_identity_check(*ctx.stepper, *ctx.proj, ctx.leader_mask,
                                                       ctx.cost, ctx.cfg.verify_trials, rng);
    detail::add_check(checks, "adjoint_identity_max_rel", rep.max_rel, 1e-9,
                      rep.max_rel <= 1e-9, all_pass);
  }
  {
    Rng rng = ctx.rng_for(11);
    const double worst = fubini_check(ctx.kp, g, 10, rng);
    detail::add_check(checks, "fubini_max_rel", worst, 1e-10, worst <= 1e-10, all_pass);
  }
  {
    Rng rng = ctx.rng_for(12);
    VelocityField f = white_noise(g, rng);
    VelocityField pf = ctx.proj->project(f);
    VelocityField ppf = ctx.proj->project(pf);
    VelocityField d(g);
    d.data = ppf.data - pf.data;
    const double idem = norm_H(d) / std::max(norm_H(pf), 1e-300);
    detail::add_check(checks, "leray_idempotence", idem, 1e-12, idem <= 1e-12, all_pass);
    VelocityField grad_part(g);
    grad_part.data = f.data - pf.data;
    const double pyth = std::abs(inner_H(pf, pf) + inner_H(grad_part, grad_part) - inner_H(f, f)) /
                        inner_H(f, f);
    detail::add_check(checks, "leray_orthogonality", pyth, 1e-10, pyth <= 1e-10, all_pass);
    PressureField div = divergence(pf);
    const double divn = div.data.lpNorm<Eigen::Infinity>() / std::max(sup_norm(pf), 1e-300);
    detail::add_check(checks, "leray_divergence", divn, 1e-10, divn <= 1e-10, all_pass);
  }
  {
    Rng rng = ctx.rng_for(13);
    VelocityField a = ctx.proj->project(white_noise(g, rng));
    VelocityField b = ctx.proj->project(white_noise(g, rng));
    const double sab = inner_H(ctx.saddle->apply_S(a), b);
    const double sba = inner_H(a, ctx.saddle->apply_S(b));
    const double rel = std::abs(sab - sba) / std::max({std::abs(sab), std::abs(sba), 1e-300});
    detail::add_check(checks, "stokes_step_self_adjoint", rel, 1e-10, rel <= 1e-10, all_pass);
  }
  {
    // Energy monitors: unforced forward decay from random data and the
    // Gronwall bound on an unforced backward sweep.
    Rng rng = ctx.rng_for(14);
    VelocityField u0 = ctx.proj->project(white_noise(g, rng));
    Trajectory traj = ctx.stepper->forward([](int, VelocityField&) {}, &u0);
    EnergyReport fwd = energy_monitor(traj, ctx.kp);
    detail::add_check(checks, "energy_balance_max_rel", fwd.balance_max, 10.0 * g.dt * g.dt,
                      fwd.balance_max <= 10.0 * g.dt * g.dt, all_pass);
    detail::add_check(checks, "energy_gronwall_forward", fwd.gronwall_ratio, 1.0,
                      fwd.gronwall_ok, all_pass);
    VelocityField fterm = ctx.proj->project(white_noise(g, rng));
    AdjointTrajectory adj = ctx.stepper->adjoint(fterm);
    EnergyReport bwd = energy_monitor_adjoint(adj);
    detail::add_check(checks, "energy_gronwall_backward", bwd.gronwall_ratio, 1.0,
                      bwd.gronwall_ok, all_pass);
  }
  {
    Rng rng = ctx.rng_for(15);
    VelocityField f = ctx.proj->project(white_noise(g, rng));
    f.data /= norm_H(f);
    LeaderPair pair = solve_leader_adjoint_pair(*ctx.stepper, f, ctx.cost.alphas,
                                                ctx.cost.rho_sq, ctx.cost.masks);
    SmallnessReport small = appendix_smallness_check(*ctx.stepper, ctx.cost, &f, &pair);
    detail::add_check(checks, "appendix_beta", small.beta, 0.0, small.beta_positive, all_pass);
    detail::add_check(checks, "appendix_terminal_bound",
                      small.rhs > 0.0 ? small.lhs / small.rhs : 0.0, 1.0, small.bound_ok,
                      all_pass);
    Json sc;
    sc["c0_sq"] = small.c0_sq;
    sc["c1"] = small.c1;
    sc["c_grw"] = small.c_grw;
    sc["beta"] = small.beta;
    sc["lhs"] = small.lhs;
    sc["rhs"] = small.rhs;
    checks["appendix_constants"] = sc;
  }

  Json report;
  report["mode"] = "verify";
  report["scenario"] = detail::scenario_summary(ctx);
  report["checks"] = checks;
  report["all_pass"] = all_pass;
  write_json_file(out_dir + "/report.json", report);
  return all_pass ? 0 : 1;
}

/// `nash`: followers' game at the configured leader control.
inline int run_nash(const ScenarioContext& ctx, const std::string& out_dir) {
  Json report;
  report["mode"] = "nash";
  report["scenario"] = detail::scenario_summary(ctx);

  if (ctx.cfg.mode == CostMode::tracking) {
    TrackingParams tp;
    tp.alphas = ctx.cost.alphas;
    tp.mus = ctx.cfg.mus;
    for (size_t i = 0; i < ctx.cfg.followers.size(); ++i) {
      tp.omega.push_back(ctx.cost.masks[i]);
      tp.omega_obs.push_back(indicator(ctx.cfg.obs_regions[i], ctx.grid));
    }
    const bool use_leader = ctx.cfg.leader_control != LeaderControlSource::zero;
    for (int i = 0; i < static_cast<int>(tp.alphas.size()); ++i) {
      ControlField ud = ControlField::zero(ctx.grid);
      if (ctx.cfg.tracking_data == "leader_only" && use_leader) {
        Trajectory t = ctx.stepper->forward(
            [&](int m, VelocityField& out) { out.data += ctx.leader_v.at[m].data; });
        for (int m = 1; m <= ctx.grid.nt; ++m) ud.at[m] = masked(t.u[m], tp.omega_obs[i]);
      }
      tp.u_desired.push_back(std::move(ud));
    }
    TrackingSolution sol = solve_nash_tracking(*ctx.stepper,
                                               use_leader ? &ctx.leader_v : nullptr, tp);
    report["iterations"] = sol.iterations;
    report["el_residual"] = sol.el_residual_max;
    report["el_scale"] = sol.el_scale;
    std::vector<VelocityField> snaps;
    for (const auto& ci : sol.controls)
      for (int m = 1; m <= ctx.grid.nt; ++m) snaps.push_back(ci.at[m]);
    write_checkpoint(out_dir + "/fields/tracking_controls.oldn", snaps);
    write_json_file(out_dir + "/report.json", report);
    return 0;
  }

  const bool use_leader = ctx.cfg.leader_control != LeaderControlSource::zero;
  const ControlField* v = use_leader ? &ctx.leader_v : nullptr;
  NashSolution op = solve_nash(*ctx.stepper, v, ctx.cost);
  NashSolution os = solve_nash_via_optimality_system(*ctx.stepper, v, ctx.cost);

  double route_diff = 0.0, route_scale = 0.0;
  for (int i = 0; i < ctx.cost.n(); ++i) {
    ControlField d = op.w[i];
    for (int m = 1; m <= ctx.grid.nt; ++m) d.at[m].data -= os.w[i].at[m].data;
    route_diff += control_dot(d, d);
    route_scale += control_dot(op.w[i], op.w[i]);
  }
  const double route_rel = std::sqrt(route_diff) / std::max(std::sqrt(route_scale), 1e-300);

  Rng beta_rng = ctx.rng_for(20);
  Beta0Report beta = beta0_estimate(*ctx.stepper, ctx.cost, beta_rng);
  Rng ineq_rng = ctx.rng_for(21);
  NashInequalityReport ineq = verify_nash_inequality(*ctx.stepper, op, v, ctx.cost, ineq_rng);

  Json costs = Json::array();
  for (double c : op.costs) costs.push_back(c);
  Json el = Json::array();
  for (double e : op.el_residual_abs) el.push_back(e);
  report["costs"] = costs;
  report["el_residual_abs"] = el;
  report["el_scale"] = op.el_scale;
  report["krylov_iterations"] = op.iterations;
  report["krylov_residual_rel"] = op.residual_rel;
  report["os_iterations"] = os.iterations;
  report["route_agreement_rel"] = route_rel;
  report["beta0"] = beta.beta0;
  report["c_tilde0"] = beta.c_tilde0;
  report["beta0_warn"] = beta.beta0 >= 1.0;
  report["nash_inequality_min_gap"] = ineq.min_gap;
  report["nash_inequality_ok"] = ineq.ok;

  for (int i = 0; i < ctx.cost.n(); ++i) {
    std::vector<VelocityField> snaps(op.w[i].at.begin() + 1, op.w[i].at.end());
    write_checkpoint(out_dir + "/fields/w" + std::to_string(i + 1) + ".oldn", snaps);
  }
  write_checkpoint(out_dir + "/fields/state.oldn", op.state.u);
  write_json_file(out_dir + "/report.json", report);
  return 0;
}

/// `leader`: approximate controllability at the configured epsilon.
inline int run_leader(const ScenarioContext& ctx, const std::string& out_dir) {
  LeaderProblem p = make_leader_problem(*ctx.stepper, *ctx.proj, ctx.leader_mask, ctx.cost,
                                        ctx.cfg.epsilon);
  p.tol_accept = ctx.cfg.tol_accept;
  LeaderSolution sol = minimize_dual(p);
  Rng vi_rng = ctx.rng_for(30);
  ViReport vi = check_variational_inequality(p, sol, 100, vi_rng);

  Json report;
  report["mode"] = "leader";
  report["scenario"] = detail::scenario_summary(ctx);
  report["epsilon"] = ctx.cfg.epsilon;
  report["distance"] = sol.distance;
  report["leader_cost"] = sol.leader_cost;
  report["dual_value"] = sol.dual_value;
  report["gap"] = sol.gap;
  report["gap_rel"] = std::abs(sol.gap) / std::max(sol.leader_cost, 1.0);
  report["grad_norm"] = sol.grad_norm;
  report["iterations"] = sol.iterations;
  report["feasible"] = sol.feasible;
  report["vi_min"] = vi.min_lhs;
  report["vi_pass"] = vi.pass;
  Json stages = Json::array();
  for (double s : sol.stage_gaps) stages.push_back(s);
  report["stage_gaps"] = stages;

  std::vector<VelocityField> vsnaps(sol.v_star.at.begin() + 1, sol.v_star.at.end());
  write_checkpoint(out_dir + "/fields/v_star.oldn", vsnaps);
  write_checkpoint(out_dir + "/fields/f_star.oldn", {sol.f_star});
  write_checkpoint(out_dir + "/fields/u_final.oldn", {sol.u_final});
  write_json_file(out_dir + "/report.json", report);
  return sol.feasible && vi.pass ? 0 : 1;
}

/// `sweep`: epsilon sweep table (CSV) plus a summary report.
inline int run_sweep(const ScenarioContext& ctx, const std::string& out_dir) {
  Rng rng = ctx.rng_for(40);
  std::vector<SweepRow> rows = controllability_sweep(*ctx.stepper, *ctx.proj, ctx.leader_mask,
                                                     ctx.cost, ctx.cfg.eps_list, 100, rng);
  CsvTable table;
  table.columns = {"epsilon", "distance", "leader_cost", "gap", "vi_min", "iters"};
  bool all_ok = true;
  for (const auto& r : rows) {
    table.add_row({r.eps, r.distance, r.leader_cost, r.gap, r.vi_min, double(r.iters)});
    all_ok = all_ok && r.ok;
  }
  write_text_file(out_dir + "/tables/sweep.csv", table.serialize());

  Json report;
  report["mode"] = "sweep";
  report["scenario"] = detail::scenario_summary(ctx);
  Json jrows = Json::array();
  for (const auto& r : rows) {
    Json jr;
    jr["epsilon"] = r.eps;
    jr["distance"] = r.distance;
    jr["leader_cost"] = r.leader_cost;
    jr["gap"] = r.gap;
    jr["vi_min"] = r.vi_min;
    jr["iters"] = r.iters;
    jr["ok"] = r.ok;
    if (!r.error.empty()) jr["error"] = r.error;
    jrows.push_back(jr);
  }
  report["rows"] = jrows;
  report["all_ok"] = all_ok;
  write_json_file(out_dir + "/report.json", report);
  return all_ok ? 0 : 1;
}

inline int run_scenario(const ScenarioConfig& cfg, const std::string& subcommand,
                        const std::string& out_dir) {
  ScenarioContext ctx(cfg);
  std::filesystem::create_directories(out_dir);
  if (subcommand == "verify") return run_verify(ctx, out_dir);
  if (subcommand == "nash") return run_nash(ctx, out_dir);
  if (subcommand == "leader") return run_leader(ctx, out_dir);
  if (subcommand == "sweep") return run_sweep(ctx, out_dir);
  throw Error(ErrorCode::invalid_argument, "unknown subcommand: " + subcommand);
}

}  // namespace oldnash

#endif
