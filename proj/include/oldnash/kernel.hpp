#ifndef OLDNASH_KERNEL_HPP
#define OLDNASH_KERNEL_HPP

#include <cmath>
#include <vector>

#include "oldnash/grid.hpp"

namespace oldnash {

/// Physical constants of the order-one Oldroyd model and the derived
/// exponential-kernel parameters: mu = k/lambda, delta = 1/lambda,
/// gamma = (nu - k/lambda)/lambda. Dissipativity requires nu - k/lambda > 0.
struct KernelParams {
  double nu = 1.0, k = 0.5, lambda = 1.0;
  double mu = 0.5, delta = 1.0, gamma = 0.5;
};

inline KernelParams kernel_params(double nu, double k, double lambda) {
  if (!(nu > 0.0) || !(k > 0.0) || !(lambda > 0.0))
    throw Error(ErrorCode::invalid_argument, "kernel constants must be positive");
  if (!(nu - k / lambda > 0.0))
    throw Error(ErrorCode::non_dissipative, "non-dissipative parameters: need nu - k/lambda > 0");
  KernelParams p;
  p.nu = nu;
  p.k = k;
  p.lambda = lambda;
  p.mu = k / lambda;
  p.delta = 1.0 / lambda;
  p.gamma = (nu - k / lambda) / lambda;
  return p;
}

/// g(t) = gamma * exp(-delta t).
inline double eval_kernel(const KernelParams& p, double t) {
  if (t < 0.0) throw Error(ErrorCode::invalid_argument, "eval_kernel: t must be >= 0");
  return p.gamma * std::exp(-p.delta * t);
}

/// Exact exponential update of z' = -delta z + gamma Lap(u) over one step,
/// with Lap(u) frozen at the caller's chosen quadrature value:
///   z+ = exp(-delta dt) z + gamma (1 - exp(-delta dt))/delta * lap_u.
inline VelocityField advance_memory_ode(const VelocityField& z, const VelocityField& lap_u,
                                        const KernelParams& p, double dt) {
  require_same_grid(z, lap_u);
  const double decay = std::exp(-p.delta * dt);
  const double weight = p.gamma * (-std::expm1(-p.delta * dt)) / p.delta;
  VelocityField out(*z.grid);
  out.data = decay * z.data + weight * lap_u.data;
  return out;
}

/// Trapezoidal evaluation of int_0^{t_m} g(t_m - s) Lap(u)(s) ds from stored
/// Laplacian snapshots at steps 0..m. Second order in dt.
inline VelocityField convolve_history(const std::vector<VelocityField>& lap_history,
                                      const KernelParams& p, int step_index, double dt) {
  if (lap_history.empty()) throw Error(ErrorCode::invalid_argument, "empty history");
  const Grid& g = *lap_history[0].grid;
  VelocityField out(g);
  if (step_index <= 0) return out;
  const double tm = step_index * dt;
  out.data = 0.5 * dt * eval_kernel(p, tm) * lap_history[0].data;
  for (int j = 1; j < step_index; ++j)
    out.data += dt * eval_kernel(p, tm - j * dt) * lap_history[j].data;
  out.data += 0.5 * dt * p.gamma * lap_history[step_index].data;
  return out;
}

}  // namespace oldnash

#endif
