#pragma once

// Splatting kernels templated on the scalar type, so the same code paths
// serve plain double evaluation and forward-mode tangent propagation (Dual).
// All branch decisions use value parts only, keeping double and Dual runs on
// identical trajectories.
//
// Reduction order is fixed everywhere: per-pixel compositing walks Gaussians
// front to back (depth sort, index tie-break); cross-pixel accumulation of
// parameter adjoints folds in row-major pixel order; views fold in task
// order. The OpenMP paths preserve this order exactly, so serial and
// parallel execution are bitwise identical.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <type_traits>
#include <vector>

#include "iftsplat/camera.hpp"
#include "iftsplat/dual.hpp"
#include "iftsplat/errors.hpp"
#include "iftsplat/params.hpp"
#include "iftsplat/runtime.hpp"
#include "iftsplat/smallmath.hpp"

namespace iftsplat::detail {

inline constexpr double kZNear = 0.01;
inline constexpr double kBlurPx2 = 0.3;  // screen-space dilation added to cov2d
inline constexpr double kAlphaMin = 1.0 / 255.0;
inline constexpr double kMaxPower = 4.5;  // 3-sigma footprint

template <class T>
struct ScreenGaussian {
  Vec2<T> mean2d;
  Sym2<T> cov2d;
  Sym2<T> conic;
  T depth{};
  T opacity{};
  Vec3<T> color;
  bool valid = false;
  // Conservative 3-sigma bounding box in pixel coordinates (value space).
  double x0 = 0.0, x1 = -1.0, y0 = 0.0, y1 = -1.0;
};

/// Activation + EWA projection of one Gaussian. Returns valid=false when the
/// Gaussian is behind the near plane (culled, not fatal).
template <class T>
ScreenGaussian<T> project_gaussian(const T* g, const Camera& cam) {
  using std::exp;
  using std::sqrt;
  ScreenGaussian<T> out;
  const Vec3<T> mean{g[0], g[1], g[2]};
  const Vec3<T> t = mat_vec(cam.rot, mean) + Vec3<T>{T(cam.trans.x), T(cam.trans.y), T(cam.trans.z)};
  if (!(value_of(t.z) > kZNear)) return out;

  const Vec3<T> s{exp(g[3]), exp(g[4]), exp(g[5])};
  Quat<T> q{g[6], g[7], g[8], g[9]};
  const T qn2 = q.w * q.w + q.x * q.x + q.y * q.y + q.z * q.z;
  if (!(value_of(qn2) > 0.0)) throw DegenerateRotation("project: zero-norm quaternion");
  const T qi = T(1) / sqrt(qn2);
  q = {q.w * qi, q.x * qi, q.y * qi, q.z * qi};
  const Mat3<T> R = rotation_from_unit_quat(q);
  const Mat3<T> sigma3 = sandwich_diag(R, Vec3<T>{s.x * s.x, s.y * s.y, s.z * s.z});

  const T iz = T(1) / t.z;
  const T iz2 = iz * iz;
  Mat23<T> Jp;
  Jp.m[0][0] = T(cam.fx) * iz;
  Jp.m[0][1] = T(0);
  Jp.m[0][2] = -T(cam.fx) * t.x * iz2;
  Jp.m[1][0] = T(0);
  Jp.m[1][1] = T(cam.fy) * iz;
  Jp.m[1][2] = -T(cam.fy) * t.y * iz2;
  const Mat23<T> A = mul_23_33(Jp, cam.rot);

  Sym2<T> cov = sandwich_23(A, sigma3);
  cov.a += T(kBlurPx2);
  cov.c += T(kBlurPx2);
  const T det = cov.a * cov.c - cov.b * cov.b;  // >= blur^2 > 0
  const T idet = T(1) / det;
  out.conic = {cov.c * idet, -cov.b * idet, cov.a * idet};
  out.cov2d = cov;
  out.depth = t.z;
  out.mean2d = {T(cam.fx) * t.x * iz + T(cam.cx), T(cam.fy) * t.y * iz + T(cam.cy)};
  out.opacity = sigmoid(g[10]);
  out.color = {sigmoid(g[11]), sigmoid(g[12]), sigmoid(g[13])};

  const double rx = 3.0 * std::sqrt(value_of(cov.a));
  const double ry = 3.0 * std::sqrt(value_of(cov.c));
  out.x0 = value_of(out.mean2d.x) - rx;
  out.x1 = value_of(out.mean2d.x) + rx;
  out.y0 = value_of(out.mean2d.y) - ry;
  out.y1 = value_of(out.mean2d.y) + ry;
  out.valid = true;
  return out;
}

template <class T>
std::vector<ScreenGaussian<T>> prepare_view(const T* params, int num_gaussians,
                                            const Camera& cam) {
  std::vector<ScreenGaussian<T>> out(num_gaussians);
  for (int i = 0; i < num_gaussians; ++i)
    out[i] = project_gaussian(params + kStride * i, cam);
  return out;
}

/// Visible Gaussians sorted front to back; stable index tie-break.
template <class T>
std::vector<int> depth_order(const std::vector<ScreenGaussian<T>>& gs) {
  std::vector<int> order;
  order.reserve(gs.size());
  for (int i = 0; i < static_cast<int>(gs.size()); ++i)
    if (gs[i].valid) order.push_back(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double da = value_of(gs[a].depth), db = value_of(gs[b].depth);
    return da < db || (da == db && a < b);
  });
  return order;
}

/// Front-to-back alpha compositing over a black background.
/// When opacity_budget is non-null it receives, per pixel, the accumulated
/// alpha mass plus final transmittance (identically 1 up to rounding).
template <class T>
void render_view(const std::vector<ScreenGaussian<T>>& gs, const std::vector<int>& order,
                 const Camera& cam, T* out, std::type_identity_t<T>* opacity_budget = nullptr,
                 Exec exec = Exec::parallel) {
  const int np = cam.width * cam.height;
  run_indexed(np, exec, [&](int pix) {
    using std::exp;
    const double px = (pix % cam.width) + 0.5;
    const double py = (pix / cam.width) + 0.5;
    T trans(1.0);
    Vec3<T> c{T(0), T(0), T(0)};
    T mass(0.0);
    for (int gi : order) {
      const ScreenGaussian<T>& g = gs[gi];
      if (px < g.x0 || px > g.x1 || py < g.y0 || py > g.y1) continue;
      const T dx = T(px) - g.mean2d.x;
      const T dy = T(py) - g.mean2d.y;
      const T power =
          T(0.5) * (g.conic.a * dx * dx + T(2) * g.conic.b * dx * dy + g.conic.c * dy * dy);
      if (value_of(power) > kMaxPower) continue;
      const T alpha = g.opacity * exp(-power);
      if (value_of(alpha) < kAlphaMin) continue;
      const T w = alpha * trans;
      c.x += g.color.x * w;
      c.y += g.color.y * w;
      c.z += g.color.z * w;
      mass += w;
      trans *= T(1) - alpha;
    }
    out[3 * pix + 0] = c.x;
    out[3 * pix + 1] = c.y;
    out[3 * pix + 2] = c.z;
    if (opacity_budget) opacity_budget[pix] = mass + trans;
  });
}

/// Per-Gaussian adjoints of the screen-space quantities for one view.
template <class T>
struct ScreenAdjoint {
  Vec2<T> d_mean2d;
  Sym2<T> d_conic;  // adjoint of the packed conic (a, b, c)
  T d_opacity{};    // adjoint of the activated opacity
  Vec3<T> d_color;  // adjoint of the activated color
};

template <class T>
struct PixContrib {
  int g = 0;
  T f[9];  // forward: alpha, T_before, G, dx, dy; rewritten to adjoints
};

/// Reverse pass of the compositing step. `ubar` holds the per-pixel color
/// adjoint (3 per pixel, residual adjoint already folded with the residual
/// normalization). Accumulates per-Gaussian screen adjoints in row-major
/// pixel order.
template <class T>
void composite_vjp_view(const std::vector<ScreenGaussian<T>>& gs, const std::vector<int>& order,
                        const Camera& cam, const T* ubar, std::vector<ScreenAdjoint<T>>& adj,
                        Exec exec) {
  const int np = cam.width * cam.height;
  std::vector<int> counts(np + 1, 0);
  run_indexed(np, exec, [&](int pix) {
    const double px = (pix % cam.width) + 0.5;
    const double py = (pix / cam.width) + 0.5;
    int cnt = 0;
    for (int gi : order) {
      const ScreenGaussian<T>& g = gs[gi];
      if (px < g.x0 || px > g.x1 || py < g.y0 || py > g.y1) continue;
      const double dx = px - value_of(g.mean2d.x);
      const double dy = py - value_of(g.mean2d.y);
      const double power = 0.5 * (value_of(g.conic.a) * dx * dx +
                                  2.0 * value_of(g.conic.b) * dx * dy +
                                  value_of(g.conic.c) * dy * dy);
      if (power > kMaxPower) continue;
      if (value_of(g.opacity) * std::exp(-power) < kAlphaMin) continue;
      ++cnt;
    }
    counts[pix + 1] = cnt;
  });
  std::partial_sum(counts.begin(), counts.end(), counts.begin());
  std::vector<PixContrib<T>> slots(counts[np]);

  run_indexed(np, exec, [&](int pix) {
    const double px = (pix % cam.width) + 0.5;
    const double py = (pix / cam.width) + 0.5;
    const int begin = counts[pix];
    using std::exp;
    int at = begin;
    T trans(1.0);
    for (int gi : order) {
      const ScreenGaussian<T>& g = gs[gi];
      if (px < g.x0 || px > g.x1 || py < g.y0 || py > g.y1) continue;
      const T dx = T(px) - g.mean2d.x;
      const T dy = T(py) - g.mean2d.y;
      const T power =
          T(0.5) * (g.conic.a * dx * dx + T(2) * g.conic.b * dx * dy + g.conic.c * dy * dy);
      if (value_of(power) > kMaxPower) continue;
      const T gauss = exp(-power);
      const T alpha = g.opacity * gauss;
      if (value_of(alpha) < kAlphaMin) continue;
      PixContrib<T>& rec = slots[at++];
      rec.g = gi;
      rec.f[0] = alpha;
      rec.f[1] = trans;
      rec.f[2] = gauss;
      rec.f[3] = dx;
      rec.f[4] = dy;
      trans *= T(1) - alpha;
    }
    // Suffix pass: rewrite forward records into screen-space adjoints.
    const Vec3<T> ub{ubar[3 * pix + 0], ubar[3 * pix + 1], ubar[3 * pix + 2]};
    Vec3<T> suffix{T(0), T(0), T(0)};
    for (int slot = at - 1; slot >= begin; --slot) {
      PixContrib<T>& rec = slots[slot];
      const ScreenGaussian<T>& g = gs[rec.g];
      const T alpha = rec.f[0], tb = rec.f[1], gauss = rec.f[2], dx = rec.f[3], dy = rec.f[4];
      const T w = alpha * tb;
      const Vec3<T> wcol{ub.x * w, ub.y * w, ub.z * w};
      const T inv1ma = T(1) / (T(1) - alpha);
      const T galpha = ub.x * (g.color.x * tb - suffix.x * inv1ma) +
                       ub.y * (g.color.y * tb - suffix.y * inv1ma) +
                       ub.z * (g.color.z * tb - suffix.z * inv1ma);
      const T dpow = -(galpha * alpha);
      const T kdx = g.conic.a * dx + g.conic.b * dy;
      const T kdy = g.conic.b * dx + g.conic.c * dy;
      suffix.x += g.color.x * w;
      suffix.y += g.color.y * w;
      suffix.z += g.color.z * w;
      rec.f[0] = -dpow * kdx;            // d mean2d.x
      rec.f[1] = -dpow * kdy;            // d mean2d.y
      rec.f[2] = dpow * T(0.5) * dx * dx;  // d conic.a
      rec.f[3] = dpow * dx * dy;           // d conic.b
      rec.f[4] = dpow * T(0.5) * dy * dy;  // d conic.c
      rec.f[5] = galpha * gauss;           // d opacity (activated)
      rec.f[6] = wcol.x;
      rec.f[7] = wcol.y;
      rec.f[8] = wcol.z;
    }
  });

  // Fixed-order fold: slots are laid out pixel-major, so this reduction is
  // independent of the thread count.
  for (const PixContrib<T>& rec : slots) {
    ScreenAdjoint<T>& a = adj[rec.g];
    a.d_mean2d.x += rec.f[0];
    a.d_mean2d.y += rec.f[1];
    a.d_conic.a += rec.f[2];
    a.d_conic.b += rec.f[3];
    a.d_conic.c += rec.f[4];
    a.d_opacity += rec.f[5];
    a.d_color.x += rec.f[6];
    a.d_color.y += rec.f[7];
    a.d_color.z += rec.f[8];
  }
}

/// Chains one Gaussian's screen-space adjoints back to its 14 unconstrained
/// parameters (activation + rigid transform + EWA projection + conic
/// inverse). Accumulates into grad14.
template <class T>
void screen_adjoint_to_params(const T* g, const Camera& cam, const ScreenAdjoint<T>& a,
                              T* grad14) {
  using std::exp;
  using std::sqrt;
  // Forward recompute (cheap relative to the per-pixel work).
  const Vec3<T> mean{g[0], g[1], g[2]};
  const Vec3<T> t =
      mat_vec(cam.rot, mean) + Vec3<T>{T(cam.trans.x), T(cam.trans.y), T(cam.trans.z)};
  const Vec3<T> s{exp(g[3]), exp(g[4]), exp(g[5])};
  Quat<T> q{g[6], g[7], g[8], g[9]};
  const T qn2 = q.w * q.w + q.x * q.x + q.y * q.y + q.z * q.z;
  const T qi = T(1) / sqrt(qn2);
  const Quat<T> qh{q.w * qi, q.x * qi, q.y * qi, q.z * qi};
  const Mat3<T> R = rotation_from_unit_quat(qh);
  const Vec3<T> s2{s.x * s.x, s.y * s.y, s.z * s.z};
  const Mat3<T> sigma3 = sandwich_diag(R, s2);
  const T iz = T(1) / t.z;
  const T iz2 = iz * iz;
  Mat23<T> Jp;
  Jp.m[0][0] = T(cam.fx) * iz;
  Jp.m[0][1] = T(0);
  Jp.m[0][2] = -T(cam.fx) * t.x * iz2;
  Jp.m[1][0] = T(0);
  Jp.m[1][1] = T(cam.fy) * iz;
  Jp.m[1][2] = -T(cam.fy) * t.y * iz2;
  const Mat23<T> A = mul_23_33(Jp, cam.rot);
  Sym2<T> cov = sandwich_23(A, sigma3);
  cov.a += T(kBlurPx2);
  cov.c += T(kBlurPx2);
  const T det = cov.a * cov.c - cov.b * cov.b;
  const T idet = T(1) / det;
  const T Kc[3] = {cov.c * idet, -cov.b * idet, cov.a * idet};  // conic a,b,c

  // Activations.
  const T opa = sigmoid(g[10]);
  grad14[10] += a.d_opacity * opa * (T(1) - opa);
  for (int ch = 0; ch < 3; ++ch) {
    const T col = sigmoid(g[11 + ch]);
    const T dcol = (ch == 0) ? a.d_color.x : (ch == 1 ? a.d_color.y : a.d_color.z);
    grad14[11 + ch] += dcol * col * (T(1) - col);
  }

  // conic = cov^{-1}: cov_bar = -K * K_bar * K with the packed off-diagonal
  // adjoint split across both symmetric slots.
  const T kb00 = a.d_conic.a, kb01 = T(0.5) * a.d_conic.b, kb11 = a.d_conic.c;
  // M = K_bar * K (2x2 full)
  const T m00 = kb00 * Kc[0] + kb01 * Kc[1];
  const T m01 = kb00 * Kc[1] + kb01 * Kc[2];
  const T m10 = kb01 * Kc[0] + kb11 * Kc[1];
  const T m11 = kb01 * Kc[1] + kb11 * Kc[2];
  // cov_bar = -K * M (symmetric)
  const T cb00 = -(Kc[0] * m00 + Kc[1] * m10);
  const T cb01 = -(Kc[0] * m01 + Kc[1] * m11);
  const T cb11 = -(Kc[1] * m01 + Kc[2] * m11);

  // cov = A sigma3 A^T (+blur): A_bar = 2 cov_bar A sigma3, sigma3_bar = A^T cov_bar A.
  T covbar[2][2] = {{cb00, cb01}, {cb01, cb11}};
  T AS[2][3];  // A * sigma3
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j)
      AS[i][j] = A.m[i][0] * sigma3.m[0][j] + A.m[i][1] * sigma3.m[1][j] +
                 A.m[i][2] * sigma3.m[2][j];
  T Abar[2][3];
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j)
      Abar[i][j] = T(2) * (covbar[i][0] * AS[0][j] + covbar[i][1] * AS[1][j]);
  T s3bar[3][3];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      s3bar[i][j] = A.m[0][i] * (covbar[0][0] * A.m[0][j] + covbar[0][1] * A.m[1][j]) +
                    A.m[1][i] * (covbar[1][0] * A.m[0][j] + covbar[1][1] * A.m[1][j]);

  // mean2d = pinhole(t): t_bar = Jp^T d_mean2d.
  Vec3<T> tbar{Jp.m[0][0] * a.d_mean2d.x + Jp.m[1][0] * a.d_mean2d.y,
               Jp.m[0][1] * a.d_mean2d.x + Jp.m[1][1] * a.d_mean2d.y,
               Jp.m[0][2] * a.d_mean2d.x + Jp.m[1][2] * a.d_mean2d.y};

  // A = Jp * Rc: Jp_bar = A_bar Rc^T; Jp depends on t.
  T Jpbar[2][3];
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j)
      Jpbar[i][j] = Abar[i][0] * cam.rot.m[j][0] + Abar[i][1] * cam.rot.m[j][1] +
                    Abar[i][2] * cam.rot.m[j][2];
  const T iz3 = iz2 * iz;
  tbar.x += Jpbar[0][2] * (-T(cam.fx) * iz2);
  tbar.y += Jpbar[1][2] * (-T(cam.fy) * iz2);
  tbar.z += Jpbar[0][0] * (-T(cam.fx) * iz2) + Jpbar[1][1] * (-T(cam.fy) * iz2) +
            Jpbar[0][2] * (T(2) * T(cam.fx) * t.x * iz3) +
            Jpbar[1][2] * (T(2) * T(cam.fy) * t.y * iz3);

  // t = Rc * mean + tc.
  const Vec3<T> meanbar = mat_tvec(cam.rot, tbar);
  grad14[0] += meanbar.x;
  grad14[1] += meanbar.y;
  grad14[2] += meanbar.z;

  // sigma3 = R diag(s^2) R^T: R_bar = 2 sigma3_bar R D, log_scale_bar_k = 2 s_k^2 (R^T sigma3_bar R)_kk.
  T Rbar[3][3];
  const T d3[3] = {s2.x, s2.y, s2.z};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      T acc = T(0);
      for (int k = 0; k < 3; ++k) acc += s3bar[i][k] * R.m[k][j];
      Rbar[i][j] = T(2) * acc * d3[j];
    }
  for (int k = 0; k < 3; ++k) {
    T rtr = T(0);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) rtr += R.m[i][k] * s3bar[i][j] * R.m[j][k];
    grad14[3 + k] += T(2) * d3[k] * rtr;
  }

  // Quaternion chain: q_hat_bar then projection through the normalization.
  Mat3<T> dR[4];
  rotation_quat_derivatives(qh, dR);
  T qhbar[4];
  for (int c = 0; c < 4; ++c) {
    T acc = T(0);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) acc += Rbar[i][j] * dR[c].m[i][j];
    qhbar[c] = acc;
  }
  const T qdot = qh.w * qhbar[0] + qh.x * qhbar[1] + qh.y * qhbar[2] + qh.z * qhbar[3];
  grad14[6] += qi * (qhbar[0] - qh.w * qdot);
  grad14[7] += qi * (qhbar[1] - qh.x * qdot);
  grad14[8] += qi * (qhbar[2] - qh.y * qdot);
  grad14[9] += qi * (qhbar[3] - qh.z * qdot);
}

}  // namespace iftsplat::detail
