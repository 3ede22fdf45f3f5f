#include "iftsplat/oracles.hpp"

#include <cmath>

#include "iftsplat/render/kernels.hpp"

namespace iftsplat::oracles {

Vector fd_grad(const std::function<double(const Vector&)>& f, const Vector& x, double h) {
  if (!(h > 0.0)) throw ShapeError("fd_grad: step must be positive");
  Vector g(x.size());
  Vector xp = x;
  for (int k = 0; k < x.size(); ++k) {
    const double orig = xp[k];
    xp[k] = orig + h;
    const double fp = f(xp);
    xp[k] = orig - h;
    const double fm = f(xp);
    xp[k] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NonFiniteEval("fd_grad: non-finite function value");
    g[k] = (fp - fm) / (2.0 * h);
  }
  return g;
}

Eigen::MatrixXd dense_jacobian(const ResidualMap& map, const Vector& p, double h,
                               long max_entries) {
  const long rows = map.residual_dim();
  const long cols = map.param_dim();
  if (rows * cols > max_entries)
    throw TooLarge("dense_jacobian: system exceeds the desk-scale guard");
  Eigen::MatrixXd J(rows, cols);
  Vector pp = p;
  for (int k = 0; k < cols; ++k) {
    const double orig = pp[k];
    pp[k] = orig + h;
    const Vector rp = map.residual(pp);
    pp[k] = orig - h;
    const Vector rm = map.residual(pp);
    pp[k] = orig;
    J.col(k) = (rp - rm) / (2.0 * h);
  }
  return J;
}

Eigen::MatrixXd dense_jacobian(const ParamVector& p, const ContextSet& ctx, double h,
                               long max_entries) {
  const SplatResidual map = make_splat_residual(p, ctx);
  return dense_jacobian(map, p.data(), h, max_entries);
}

Vector quadratic_closed_form(const QuadraticTask& task, const Vector& p0,
                             const Vector& lam_eff) {
  if (p0.size() != task.A.cols() || lam_eff.size() != p0.size())
    throw ShapeError("quadratic_closed_form: length mismatch");
  Eigen::MatrixXd M = task.gram;
  M.diagonal() += lam_eff;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(M);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 1e-12 * std::max(1.0, hi)))
    throw SingularSystem("quadratic_closed_form: A^T A + diag(lam) is singular");
  const Vector rhs = task.A.transpose() * task.b + lam_eff.cwiseProduct(p0);
  return M.ldlt().solve(rhs);
}

Vector unrolled_grad_fd(const ResidualMap& map, const Vector& p0, const RegWeights& lam_eff,
                        const InnerConfig& cfg, const Vector& rates,
                        const OuterObjective& outer, double h, int max_params) {
  if (p0.size() > max_params) throw TooLarge("unrolled_grad_fd: parameter count guard");
  return fd_grad(
      [&](const Vector& x) {
        const TtoResult res = run_tto(map, x, lam_eff, cfg, rates);
        return outer.value(res.p_star);
      },
      p0, h);
}

namespace {

// Inner gradient with dual-number parameters; the value lane mirrors the
// double path operation-for-operation.
std::vector<Dual> splat_inner_grad_dual(const std::vector<Dual>& p,
                                        const std::vector<Dual>& p0, const RegWeights& lam,
                                        const ContextSet& ctx) {
  const int n = static_cast<int>(p.size());
  const int ng = n / kStride;
  const double scale = residual_scale(ctx);
  std::vector<Dual> grad(n);
  for (const View& view : ctx.views) {
    const Camera& cam = view.camera;
    const auto gs = detail::prepare_view(p.data(), ng, cam);
    const auto order = detail::depth_order(gs);
    const int nv = view.image.value_count();
    std::vector<Dual> img(nv);
    detail::render_view(gs, order, cam, img.data(), nullptr, Exec::serial);
    std::vector<Dual> ubar(nv);
    for (int i = 0; i < nv; ++i)
      ubar[i] = ((img[i] - Dual(view.image.data[i])) * Dual(scale)) * Dual(scale);
    std::vector<detail::ScreenAdjoint<Dual>> adj(ng);
    detail::composite_vjp_view(gs, order, cam, ubar.data(), adj, Exec::serial);
    for (int i = 0; i < ng; ++i)
      if (gs[i].valid)
        detail::screen_adjoint_to_params(p.data() + kStride * i, cam, adj[i],
                                         grad.data() + kStride * i);
  }
  for (int i = 0; i < n; ++i) grad[i] += Dual(lam.data()[i]) * (p[i] - p0[i]);
  return grad;
}

std::vector<Dual> linear_inner_grad_dual(const std::vector<Dual>& p,
                                         const std::vector<Dual>& p0, const RegWeights& lam,
                                         const QuadraticTask& task) {
  const int m = static_cast<int>(task.A.rows());
  const int n = static_cast<int>(p.size());
  std::vector<Dual> r(m);
  for (int i = 0; i < m; ++i) {
    Dual acc(-task.b[i]);
    for (int j = 0; j < n; ++j) acc += Dual(task.A(i, j)) * p[j];
    r[i] = acc;
  }
  std::vector<Dual> grad(n);
  for (int j = 0; j < n; ++j) {
    Dual acc(0.0);
    for (int i = 0; i < m; ++i) acc += Dual(task.A(i, j)) * r[i];
    grad[j] = acc + Dual(lam.data()[j]) * (p[j] - p0[j]);
  }
  return grad;
}

template <class GradFn>
Vector unrolled_dual_impl(const Vector& p0, const InnerConfig& cfg, const Vector& rates,
                          const OuterObjective& outer, int max_params, GradFn&& grad_fn) {
  const int n = static_cast<int>(p0.size());
  if (n > max_params) throw TooLarge("unrolled_grad_dual: parameter count guard");
  Vector out(n);
  Vector outer_grad_at_star;
  for (int k = 0; k < n; ++k) {
    std::vector<Dual> p(n), p0d(n);
    for (int i = 0; i < n; ++i) {
      p0d[i] = Dual(p0[i], i == k ? 1.0 : 0.0);
      p[i] = p0d[i];
    }
    for (int step = 0; step < cfg.steps; ++step) {
      const std::vector<Dual> g = grad_fn(p, p0d);
      for (int i = 0; i < n; ++i) p[i] -= Dual(rates[i]) * g[i];
    }
    if (outer_grad_at_star.size() == 0) {
      Vector pv(n);
      for (int i = 0; i < n; ++i) pv[i] = p[i].v;
      outer_grad_at_star = outer.grad(pv);
    }
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += outer_grad_at_star[i] * p[i].d;
    out[k] = acc;
  }
  return out;
}

}  // namespace

Vector unrolled_grad_dual(const ParamVector& p0, const RegWeights& lam_eff,
                          const ContextSet& ctx, const InnerConfig& cfg, const Vector& rates,
                          const OuterObjective& outer, int max_params) {
  return unrolled_dual_impl(p0.data(), cfg, rates, outer, max_params,
                            [&](const std::vector<Dual>& p, const std::vector<Dual>& q0) {
                              return splat_inner_grad_dual(p, q0, lam_eff, ctx);
                            });
}

Vector unrolled_grad_dual(const QuadraticTask& task, const Vector& p0,
                          const RegWeights& lam_eff, const InnerConfig& cfg,
                          const Vector& rates, const OuterObjective& outer, int max_params) {
  return unrolled_dual_impl(p0, cfg, rates, outer, max_params,
                            [&](const std::vector<Dual>& p, const std::vector<Dual>& q0) {
                              return linear_inner_grad_dual(p, q0, lam_eff, task);
                            });
}

Vector unrolled_grad(const ParamVector& p0, const RegWeights& lam_eff, const ContextSet& ctx,
                     const InnerConfig& cfg, const OuterObjective& outer, double h) {
  const SplatResidual map = make_splat_residual(p0, ctx);
  return unrolled_grad_fd(map, p0.data(), lam_eff, cfg,
                          per_group_rates(p0.num_gaussians(), cfg.rates), outer, h);
}

}  // namespace iftsplat::oracles
