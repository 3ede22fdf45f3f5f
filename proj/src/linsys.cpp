#include "iftsplat/linsys.hpp"

#include <cmath>

namespace iftsplat {

Vector NormalOperator::diagonal() const {
  return exact_diag(map_, p_) + damping_.data();
}

Vector exact_diag(const ResidualMap& map, const Vector& p) {
  const int n = map.param_dim();
  Vector d(n);
  Vector e = Vector::Zero(n);
  for (int k = 0; k < n; ++k) {
    e[k] = 1.0;
    d[k] = map.jvp(p, e).squaredNorm();
    e[k] = 0.0;
  }
  return d;
}

Vector exact_diag(const ParamVector& p, const ContextSet& ctx, Exec exec) {
  SplatResidual map = make_splat_residual(p, ctx, exec);
  return exact_diag(map, p.data());
}

DiagScaler update_scaler(const DiagScaler& s, const Vector& diag) {
  if ((diag.array() < 0.0).any()) throw InvalidDiag("update_scaler: negative diagonal entry");
  const Vector floored = diag.cwiseMax(kScalerFloor);
  DiagScaler out = s;
  if (!s.initialized) {
    out.m = floored;
    out.initialized = true;
  } else {
    if (s.m.size() != diag.size()) throw ShapeError("update_scaler: length mismatch");
    out.m = s.decay * s.m + (1.0 - s.decay) * floored;
  }
  return out;
}

RegWeights effective_damping(const RegWeights& lam, const DiagScaler& scaler,
                             double lambda_global) {
  if (!scaler.initialized) return RegWeights(lambda_global * lam.data());
  if (scaler.m.size() != lam.size()) throw ShapeError("effective_damping: length mismatch");
  return RegWeights(lambda_global * lam.data().cwiseProduct(scaler.m));
}

PcgResult pcg_solve(const LinOp& op, const Vector& b, const PcgConfig& cfg,
                    const PcgCallback& callback) {
  const int n = op.dim();
  if (b.size() != n) throw ShapeError("pcg_solve: rhs length mismatch");
  PcgResult out;
  out.x = Vector::Zero(n);
  const double bnorm = b.norm();
  if (!std::isfinite(bnorm)) throw NonFiniteBreakdown("pcg_solve: non-finite rhs");
  if (bnorm == 0.0) {
    out.converged = true;
    return out;
  }

  Vector minv = Vector::Ones(n);
  if (cfg.jacobi) minv = op.diagonal().cwiseInverse();

  Vector r = b;
  Vector z = minv.cwiseProduct(r);
  Vector p = z;
  double rho = r.dot(z);
  if (!std::isfinite(rho)) throw NonFiniteBreakdown("pcg_solve: non-finite preconditioned rhs");

  for (int k = 1; k <= cfg.max_iters; ++k) {
    const Vector q = op.apply(p);
    const double pq = p.dot(q);
    if (!std::isfinite(pq) || pq == 0.0)
      throw NonFiniteBreakdown("pcg_solve: breakdown in direction curvature product");
    const double alpha = rho / pq;
    out.x += alpha * p;
    r -= alpha * q;
    out.iters = k;
    if (callback) callback(k, out.x);
    const double rnorm = r.norm();
    if (!std::isfinite(rnorm)) throw NonFiniteBreakdown("pcg_solve: non-finite residual");
    if (rnorm <= cfg.tol * bnorm) {
      out.converged = true;
      break;
    }
    z = minv.cwiseProduct(r);
    const double rho_next = r.dot(z);
    p = z + (rho_next / rho) * p;
    rho = rho_next;
  }

  out.rel_residual = (b - op.apply(out.x)).norm() / bnorm;
  out.converged = out.converged || out.rel_residual <= cfg.tol;
  return out;
}

}  // namespace iftsplat
