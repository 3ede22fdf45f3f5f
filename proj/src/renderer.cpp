#include "iftsplat/render/renderer.hpp"

#include <cmath>

#include "iftsplat/render/kernels.hpp"

namespace iftsplat {

std::optional<Projection> project(const RenderableGaussian& g, const Camera& cam) {
  double raw[kStride];
  raw[0] = g.mean.x;
  raw[1] = g.mean.y;
  raw[2] = g.mean.z;
  raw[3] = std::log(g.scale.x);
  raw[4] = std::log(g.scale.y);
  raw[5] = std::log(g.scale.z);
  raw[6] = g.rot.w;
  raw[7] = g.rot.x;
  raw[8] = g.rot.y;
  raw[9] = g.rot.z;
  raw[10] = logit(g.opacity);
  raw[11] = logit(g.color.x);
  raw[12] = logit(g.color.y);
  raw[13] = logit(g.color.z);
  const auto sg = detail::project_gaussian(raw, cam);
  if (!sg.valid) return std::nullopt;
  return Projection{sg.mean2d, sg.cov2d, sg.depth};
}

ImageBuffer render(const ParamVector& p, const Camera& cam, Exec exec) {
  const auto gs = detail::prepare_view(p.raw(), p.num_gaussians(), cam);
  const auto order = detail::depth_order(gs);
  ImageBuffer img = ImageBuffer::zeros(cam.width, cam.height);
  detail::render_view(gs, order, cam, img.data.data(), nullptr, exec);
  return img;
}

double residual_scale(const ContextSet& ctx) {
  const int total = ctx.total_values();
  if (total == 0) throw ShapeError("residual: empty context set");
  return 1.0 / std::sqrt(static_cast<double>(total));
}

ResidualVector residual(const ParamVector& p, const ContextSet& ctx, Exec exec) {
  const double scale = residual_scale(ctx);
  ResidualVector r{Vector(ctx.total_values()), true};
  int off = 0;
  for (const View& view : ctx.views) {
    const ImageBuffer img = render(p, view.camera, exec);
    const int n = img.value_count();
    for (int i = 0; i < n; ++i) r.data[off + i] = (img.data[i] - view.image.data[i]) * scale;
    off += n;
  }
  return r;
}

Vector vjp(const ParamVector& p, const ContextSet& ctx, const Vector& u, Exec exec) {
  if (u.size() != ctx.total_values())
    throw ShapeError("vjp: residual adjoint length mismatch");
  const double scale = residual_scale(ctx);
  const int n = p.num_gaussians();
  Vector grad = Vector::Zero(p.size());
  int off = 0;
  for (const View& view : ctx.views) {
    const Camera& cam = view.camera;
    const auto gs = detail::prepare_view(p.raw(), n, cam);
    const auto order = detail::depth_order(gs);
    const int nv = view.image.value_count();
    std::vector<double> ubar(nv);
    for (int i = 0; i < nv; ++i) ubar[i] = u[off + i] * scale;
    std::vector<detail::ScreenAdjoint<double>> adj(n);
    detail::composite_vjp_view(gs, order, cam, ubar.data(), adj, exec);
    double* g = grad.data();
    run_indexed(n, exec, [&](int i) {
      if (gs[i].valid)
        detail::screen_adjoint_to_params(p.raw() + kStride * i, cam, adj[i], g + kStride * i);
    });
    off += nv;
  }
  return grad;
}

ResidualVector jvp(const ParamVector& p, const ContextSet& ctx, const Vector& w, Exec exec) {
  if (w.size() != p.size()) throw ShapeError("jvp: tangent length mismatch");
  const double scale = residual_scale(ctx);
  const int n = p.num_gaussians();
  std::vector<Dual> pd(p.size());
  for (int i = 0; i < p.size(); ++i) pd[i] = Dual(p.data()[i], w[i]);
  ResidualVector out{Vector(ctx.total_values()), true};
  int off = 0;
  for (const View& view : ctx.views) {
    const Camera& cam = view.camera;
    const auto gs = detail::prepare_view(pd.data(), n, cam);
    const auto order = detail::depth_order(gs);
    const int np = cam.width * cam.height;
    std::vector<Dual> img(np * 3);
    detail::render_view(gs, order, cam, img.data(), nullptr, exec);
    for (int i = 0; i < np * 3; ++i) out.data[off + i] = img[i].d * scale;
    off += np * 3;
  }
  return out;
}

}  // namespace iftsplat
