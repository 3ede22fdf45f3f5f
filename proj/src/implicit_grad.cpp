#include "iftsplat/implicit_grad.hpp"

#include <cmath>

namespace iftsplat {

BackwardResult implicit_backward(const ResidualMap& map, const Vector& p_star,
                                 const Vector& p0, const RegWeights& lam_eff,
                                 const Vector& lam_chain, const Vector& outer_grad,
                                 const PcgConfig& cfg, double stationarity_tol) {
  if (p_star.size() != p0.size() || p_star.size() != lam_eff.size() ||
      p_star.size() != outer_grad.size() || p_star.size() != lam_chain.size())
    throw ShapeError("implicit_backward: length mismatch");
  if (!outer_grad.allFinite())
    throw NonFiniteBreakdown("implicit_backward: non-finite outer gradient");

  BackwardResult out;
  const Vector g_inner =
      map.vjp(p_star, map.residual(p_star)) + lam_eff.data().cwiseProduct(p_star - p0);
  out.stationarity_at_solve = g_inner.lpNorm<Eigen::Infinity>();
  out.trusted = out.stationarity_at_solve <= stationarity_tol;

  const NormalOperator op(map, p_star, lam_eff);
  const PcgResult sol = pcg_solve(op, outer_grad, cfg);
  out.v = sol.x;
  out.solver_iters = sol.iters;
  out.solver_residual = sol.rel_residual;
  out.stalled = !sol.converged;

  out.grad_init = lam_eff.data().cwiseProduct(out.v);
  out.grad_lam = -out.v.cwiseProduct(p_star - p0).cwiseProduct(lam_chain);
  return out;
}

BackwardResult implicit_backward(const ParamVector& p_star, const ParamVector& p0,
                                 const RegWeights& lam, const DiagScaler& scaler,
                                 const ContextSet& ctx, const Vector& outer_grad,
                                 const PcgConfig& cfg, double lambda_global,
                                 double stationarity_tol, Exec exec) {
  const SplatResidual map = make_splat_residual(p_star, ctx, exec);
  const RegWeights lam_eff = effective_damping(lam, scaler, lambda_global);
  const Vector chain = scaler.initialized
                           ? Vector(lambda_global * scaler.m)
                           : Vector(Vector::Constant(lam.size(), lambda_global));
  return implicit_backward(map, p_star.data(), p0.data(), lam_eff, chain, outer_grad, cfg,
                           stationarity_tol);
}

BackwardResult scalar_backward(const ParamVector& p_star, const ParamVector& p0,
                               double lambda_scalar, const ContextSet& ctx,
                               const Vector& outer_grad, const PcgConfig& cfg,
                               double stationarity_tol, Exec exec) {
  const RegWeights lam = RegWeights::constant(p_star.size(), lambda_scalar);
  return implicit_backward(p_star, p0, lam, DiagScaler::unit(p_star.size()), ctx, outer_grad,
                           cfg, 1.0, stationarity_tol, exec);
}

std::vector<int> lam_gradient_sign_check(const Vector& v, const Vector& p_star,
                                         const Vector& p0) {
  if (v.size() != p_star.size() || v.size() != p0.size())
    throw ShapeError("lam_gradient_sign_check: length mismatch");
  std::vector<int> signs(v.size());
  for (int k = 0; k < v.size(); ++k) {
    const double prod = v[k] * (p_star[k] - p0[k]);
    signs[k] = prod > 0.0 ? -1 : (prod < 0.0 ? 1 : 0);
  }
  return signs;
}

}  // namespace iftsplat
