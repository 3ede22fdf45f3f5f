#pragma once

#include "iftsplat/linsys.hpp"

namespace iftsplat {

/// Result of the implicit backward pass through the proximal inner problem.
/// grad_init = lam_eff . v and grad_lam = -v . (p* - p0) . d(lam_eff)/d(lam),
/// with v the PCG solution of (J^T J + diag(lam_eff)) v = outer_grad.
struct BackwardResult {
  Vector grad_init;
  Vector grad_lam;
  Vector v;
  int solver_iters = 0;
  double solver_residual = 0.0;
  double stationarity_at_solve = 0.0;
  bool trusted = true;   // false when the inner problem was not stationary
  bool stalled = false;  // PCG hit max_iters
};

/// Core backward pass on an abstract residual map. `lam_eff` is the
/// effective damping actually used by the inner problem and `lam_chain` the
/// diagonal d(lam_eff)/d(lam) for reporting grad_lam w.r.t. the raw weights.
BackwardResult implicit_backward(const ResidualMap& map, const Vector& p_star,
                                 const Vector& p0, const RegWeights& lam_eff,
                                 const Vector& lam_chain, const Vector& outer_grad,
                                 const PcgConfig& cfg, double stationarity_tol = 1e-3);

/// Splat entry point: assembles lam_eff = lambda_global * (lam . M)
/// internally from the raw weights and the moving-average scaler.
BackwardResult implicit_backward(const ParamVector& p_star, const ParamVector& p0,
                                 const RegWeights& lam, const DiagScaler& scaler,
                                 const ContextSet& ctx, const Vector& outer_grad,
                                 const PcgConfig& cfg, double lambda_global = 1.0,
                                 double stationarity_tol = 1e-3,
                                 Exec exec = Exec::parallel);

/// Global-lambda special case: solves (J^T J + lambda I) v = outer_grad and
/// returns lambda * v. Identical to implicit_backward with constant weights
/// and a unit scaler.
BackwardResult scalar_backward(const ParamVector& p_star, const ParamVector& p0,
                               double lambda_scalar, const ContextSet& ctx,
                               const Vector& outer_grad, const PcgConfig& cfg,
                               double stationarity_tol = 1e-3, Exec exec = Exec::parallel);

/// Sign report for the uncertainty gradient: entry k is negative exactly when
/// v[k]*(p_star-p0)[k] > 0 (desired update aligned with actual movement, so
/// the penalty relaxes).
std::vector<int> lam_gradient_sign_check(const Vector& v, const Vector& p_star,
                                         const Vector& p0);

}  // namespace iftsplat
