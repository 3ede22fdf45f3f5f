#pragma once

#include <Eigen/Core>

#include "iftsplat/camera.hpp"
#include "iftsplat/params.hpp"
#include "iftsplat/render/renderer.hpp"

namespace iftsplat {

/// Matrix-free residual map r(p) with its Jacobian products. The inner
/// optimizer, normal operator, PCG solver and implicit backward all work
/// against this interface; the splatting renderer and the linear
/// (quadratic-oracle) residual both implement it.
class ResidualMap {
 public:
  virtual ~ResidualMap() = default;
  virtual int param_dim() const = 0;
  virtual int residual_dim() const = 0;
  virtual Vector residual(const Vector& p) const = 0;
  virtual Vector jvp(const Vector& p, const Vector& w) const = 0;
  virtual Vector vjp(const Vector& p, const Vector& u) const = 0;
};

/// Rendering residual over a context set (normalized by residual count).
class SplatResidual final : public ResidualMap {
 public:
  SplatResidual(ContextSet ctx, Exec exec = Exec::parallel)
      : ctx_(std::move(ctx)), exec_(exec) {}

  int param_dim() const override { return params_; }
  int residual_dim() const override { return ctx_.total_values(); }
  void bind_param_dim(int n) { params_ = n; }

  Vector residual(const Vector& p) const override {
    return iftsplat::residual(ParamVector(p), ctx_, exec_).data;
  }
  Vector jvp(const Vector& p, const Vector& w) const override {
    return iftsplat::jvp(ParamVector(p), ctx_, w, exec_).data;
  }
  Vector vjp(const Vector& p, const Vector& u) const override {
    return iftsplat::vjp(ParamVector(p), ctx_, u, exec_);
  }
  const ContextSet& context() const { return ctx_; }

 private:
  ContextSet ctx_;
  Exec exec_;
  int params_ = 0;
};

/// r(p) = A p - b. The Gauss-Newton Hessian is exact here, which makes this
/// the closed-form oracle instance.
class LinearResidual final : public ResidualMap {
 public:
  LinearResidual(Eigen::MatrixXd A, Vector b) : A_(std::move(A)), b_(std::move(b)) {
    if (A_.rows() != b_.size()) throw ShapeError("LinearResidual: A rows != b length");
  }

  int param_dim() const override { return static_cast<int>(A_.cols()); }
  int residual_dim() const override { return static_cast<int>(A_.rows()); }
  Vector residual(const Vector& p) const override { return A_ * p - b_; }
  Vector jvp(const Vector&, const Vector& w) const override { return A_ * w; }
  Vector vjp(const Vector&, const Vector& u) const override { return A_.transpose() * u; }
  const Eigen::MatrixXd& A() const { return A_; }
  const Vector& b() const { return b_; }

 private:
  Eigen::MatrixXd A_;
  Vector b_;
};

/// Splat residual with the parameter dimension recorded.
inline SplatResidual make_splat_residual(const ParamVector& p, const ContextSet& ctx,
                                         Exec exec = Exec::parallel) {
  SplatResidual map(ctx, exec);
  map.bind_param_dim(p.size());
  return map;
}

}  // namespace iftsplat
