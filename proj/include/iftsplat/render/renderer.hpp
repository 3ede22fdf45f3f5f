#pragma once

#include <optional>

#include "iftsplat/camera.hpp"
#include "iftsplat/params.hpp"
#include "iftsplat/runtime.hpp"

namespace iftsplat {

/// Residuals are scaled by 1/sqrt(total residual count) so that
/// 0.5*||r||^2 equals half the per-pixel-channel MSE.
struct ResidualVector {
  Vector data;
  bool normalized = false;
};

struct Projection {
  Vec2<double> mean2d;
  Sym2<double> cov2d;
  double depth = 0.0;
};

/// EWA projection of one activated Gaussian; empty when culled behind the
/// near plane.
std::optional<Projection> project(const RenderableGaussian& g, const Camera& cam);

ImageBuffer render(const ParamVector& p, const Camera& cam, Exec exec = Exec::parallel);

ResidualVector residual(const ParamVector& p, const ContextSet& ctx,
                        Exec exec = Exec::parallel);

/// J^T u for J = d residual / d params at p.
Vector vjp(const ParamVector& p, const ContextSet& ctx, const Vector& u,
           Exec exec = Exec::parallel);

/// J w, computed by forward-mode tangent propagation.
ResidualVector jvp(const ParamVector& p, const ContextSet& ctx, const Vector& w,
                   Exec exec = Exec::parallel);

double residual_scale(const ContextSet& ctx);

}  // namespace iftsplat
