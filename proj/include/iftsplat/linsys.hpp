#pragma once

#include <functional>

#include "iftsplat/residual_map.hpp"

namespace iftsplat {

/// Abstract SPD operator for the matrix-free solver.
class LinOp {
 public:
  virtual ~LinOp() = default;
  virtual int dim() const = 0;
  virtual Vector apply(const Vector& w) const = 0;
  virtual Vector diagonal() const = 0;  // for Jacobi preconditioning
};

/// Matrix-free (J^T J + diag(damping)) at a fixed base point.
class NormalOperator final : public LinOp {
 public:
  NormalOperator(const ResidualMap& map, Vector base_point, RegWeights damping)
      : map_(map), p_(std::move(base_point)), damping_(std::move(damping)) {
    if (damping_.size() != p_.size())
      throw ShapeError("NormalOperator: damping length mismatch");
  }

  int dim() const override { return static_cast<int>(p_.size()); }
  Vector apply(const Vector& w) const override {
    if (w.size() != p_.size()) throw ShapeError("NormalOperator: vector length mismatch");
    return map_.vjp(p_, map_.jvp(p_, w)) + damping_.data().cwiseProduct(w);
  }
  Vector diagonal() const override;
  const RegWeights& damping() const { return damping_; }

 private:
  const ResidualMap& map_;
  Vector p_;
  RegWeights damping_;
};

/// diag(J^T J): entry k is ||J e_k||^2, computed via unit-vector JVPs.
Vector exact_diag(const ResidualMap& map, const Vector& p);
Vector exact_diag(const ParamVector& p, const ContextSet& ctx, Exec exec = Exec::parallel);

/// Moving average of diag(J^T J), used to scale the proximal weights so that
/// attributes with strong photometric influence get a proportionally
/// stronger anchor.
struct DiagScaler {
  Vector m;
  double decay = 0.9;
  bool initialized = false;

  static DiagScaler unit(int n) { return {Vector::Ones(n), 0.9, true}; }
};

inline constexpr double kScalerFloor = 1e-8;

DiagScaler update_scaler(const DiagScaler& s, const Vector& diag);

/// lambda_global * (lam . M), floored at kLambdaMin (via RegWeights).
RegWeights effective_damping(const RegWeights& lam, const DiagScaler& scaler,
                             double lambda_global);

struct PcgConfig {
  double tol = 1e-8;  // relative residual
  int max_iters = 500;
  bool jacobi = true;
};

struct PcgResult {
  Vector x;
  int iters = 0;
  double rel_residual = 0.0;
  bool converged = false;
};

using PcgCallback = std::function<void(int iter, const Vector& x)>;

/// Jacobi-preconditioned conjugate gradient, x0 = 0. The reported residual is
/// the true relative residual ||b - A x|| / ||b|| recomputed at exit.
PcgResult pcg_solve(const LinOp& op, const Vector& b, const PcgConfig& cfg = {},
                    const PcgCallback& callback = {});

}  // namespace iftsplat
