#pragma once

#include <Eigen/Dense>
#include <functional>

#include "iftsplat/inner_opt.hpp"
#include "iftsplat/residual_map.hpp"

namespace iftsplat::oracles {

using iftsplat::Vector;

/// Centered finite differences of a scalar function, per coordinate.
Vector fd_grad(const std::function<double(const Vector&)>& f, const Vector& x,
               double h = 1e-5);

/// Dense Jacobian of a residual map by centered differences. Guarded against
/// non-desk-scale sizes (rows*cols entries).
Eigen::MatrixXd dense_jacobian(const ResidualMap& map, const Vector& p, double h = 1e-5,
                               long max_entries = 10000);
Eigen::MatrixXd dense_jacobian(const ParamVector& p, const ContextSet& ctx, double h = 1e-5,
                               long max_entries = 10000);

/// Least-squares instance r(p) = A p - b with the Gram matrix cached; the
/// Gauss-Newton Hessian is exact for it, so the proximal minimizer has a
/// closed form.
struct QuadraticTask {
  Eigen::MatrixXd A;
  Vector b;
  Eigen::MatrixXd gram;  // A^T A

  QuadraticTask(Eigen::MatrixXd A_in, Vector b_in)
      : A(std::move(A_in)), b(std::move(b_in)), gram(A.transpose() * A) {
    if (A.rows() != b.size()) throw ShapeError("QuadraticTask: A rows != b length");
  }
  LinearResidual map() const { return LinearResidual(A, b); }
};

/// argmin_p 0.5*||A p - b||^2 + 0.5*(p-p0)^T diag(lam_eff) (p-p0)
///        = (A^T A + diag(lam_eff))^{-1} (A^T b + lam_eff . p0).
Vector quadratic_closed_form(const QuadraticTask& task, const Vector& p0,
                             const Vector& lam_eff);

struct OuterObjective {
  std::function<double(const Vector&)> value;
  std::function<Vector(const Vector&)> grad;  // required by the dual mode only
};

/// d outer(p_star(p0)) / d p0 by re-running the full TTO under coordinate
/// perturbations of p0 (centered differences).
Vector unrolled_grad_fd(const ResidualMap& map, const Vector& p0, const RegWeights& lam_eff,
                        const InnerConfig& cfg, const Vector& rates,
                        const OuterObjective& outer, double h = 1e-5, int max_params = 512);

/// Same derivative by forward-mode dual numbers pushed through every descent
/// step (plain GD; the caller must pick a configuration whose run_tto
/// trajectory accepts every step, see TtoReport::rejected_steps).
Vector unrolled_grad_dual(const ParamVector& p0, const RegWeights& lam_eff,
                          const ContextSet& ctx, const InnerConfig& cfg, const Vector& rates,
                          const OuterObjective& outer, int max_params = 512);
Vector unrolled_grad_dual(const QuadraticTask& task, const Vector& p0,
                          const RegWeights& lam_eff, const InnerConfig& cfg,
                          const Vector& rates, const OuterObjective& outer,
                          int max_params = 512);

/// Spec surface: FD mode over the splat residual with per-group rates.
Vector unrolled_grad(const ParamVector& p0, const RegWeights& lam_eff, const ContextSet& ctx,
                     const InnerConfig& cfg, const OuterObjective& outer, double h = 1e-5);

}  // namespace iftsplat::oracles
