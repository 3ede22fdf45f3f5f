#include "iftsplat/inner_opt.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

namespace iftsplat {

Vector per_group_rates(int num_gaussians, const GroupRates& rates) {
  Vector lr(kStride * num_gaussians);
  for (int i = 0; i < num_gaussians; ++i) {
    double* d = lr.data() + kStride * i;
    d[0] = d[1] = d[2] = rates.mean;
    d[3] = d[4] = d[5] = rates.log_scale;
    d[6] = d[7] = d[8] = d[9] = rates.rot;
    d[10] = rates.opacity;
    d[11] = d[12] = d[13] = rates.color;
  }
  return lr;
}

static void check_shapes(const Vector& p, const Vector& p0, const RegWeights& lam) {
  if (p.size() != p0.size() || p.size() != lam.size())
    throw ShapeError("inner objective: parameter/weight length mismatch");
}

static double loss_from_residual(const Vector& r, const Vector& p, const Vector& p0,
                                 const RegWeights& lam) {
  const Vector d = p - p0;
  return 0.5 * r.squaredNorm() + 0.5 * d.cwiseProduct(lam.data()).dot(d);
}

double inner_loss(const ResidualMap& map, const Vector& p, const Vector& p0,
                  const RegWeights& lam_eff) {
  check_shapes(p, p0, lam_eff);
  return loss_from_residual(map.residual(p), p, p0, lam_eff);
}

double inner_loss(const ParamVector& p, const ParamVector& p0, const RegWeights& lam_eff,
                  const ContextSet& ctx, Exec exec) {
  SplatResidual map = make_splat_residual(p, ctx, exec);
  return inner_loss(map, p.data(), p0.data(), lam_eff);
}

Vector inner_grad(const ResidualMap& map, const Vector& p, const Vector& p0,
                  const RegWeights& lam_eff) {
  check_shapes(p, p0, lam_eff);
  return map.vjp(p, map.residual(p)) + lam_eff.data().cwiseProduct(p - p0);
}

Vector inner_grad(const ParamVector& p, const ParamVector& p0, const RegWeights& lam_eff,
                  const ContextSet& ctx, Exec exec) {
  SplatResidual map = make_splat_residual(p, ctx, exec);
  return inner_grad(map, p.data(), p0.data(), lam_eff);
}

TtoResult run_tto(const ResidualMap& map, const Vector& p0, const RegWeights& lam_eff,
                  const InnerConfig& cfg, const Vector& rates) {
  check_shapes(p0, p0, lam_eff);
  if (rates.size() != p0.size()) throw ShapeError("run_tto: rate vector length mismatch");

  TtoResult out;
  out.p_star = p0;
  Vector r = map.residual(p0);
  double loss = loss_from_residual(r, out.p_star, p0, lam_eff);
  out.report.loss_trace.reserve(cfg.steps + 1);
  out.report.loss_trace.push_back(loss);
  if (!std::isfinite(loss)) {
    out.report.aborted_non_finite = true;
    out.report.final_stationarity = std::numeric_limits<double>::infinity();
    return out;
  }

  for (int step = 0; step < cfg.steps; ++step) {
    const Vector g = map.vjp(out.p_star, r) + lam_eff.data().cwiseProduct(out.p_star - p0);
    if (!g.allFinite()) {
      out.report.aborted_non_finite = true;
      break;
    }
    double scale = 1.0;
    bool accepted = false;
    for (int attempt = 0; attempt <= cfg.max_halvings; ++attempt) {
      const Vector cand = out.p_star - scale * rates.cwiseProduct(g);
      const Vector r_cand = map.residual(cand);
      const double loss_cand = loss_from_residual(r_cand, cand, p0, lam_eff);
      if (std::isfinite(loss_cand) && loss_cand <= loss * (1.0 + cfg.increase_slack)) {
        out.p_star = cand;
        r = r_cand;
        loss = loss_cand;
        accepted = true;
        break;
      }
      if (attempt < cfg.max_halvings) {
        scale *= 0.5;
        ++out.report.halvings;
      }
    }
    if (!accepted) ++out.report.rejected_steps;  // iterate kept unchanged
    out.report.loss_trace.push_back(loss);
  }

  const Vector g_final =
      map.vjp(out.p_star, map.residual(out.p_star)) +
      lam_eff.data().cwiseProduct(out.p_star - p0);
  out.report.final_stationarity = g_final.lpNorm<Eigen::Infinity>();
  out.report.converged = !out.report.aborted_non_finite &&
                         out.report.final_stationarity <= cfg.stationarity_tol;
  return out;
}

TtoResult run_tto(const ParamVector& p0, const RegWeights& lam_eff, const ContextSet& ctx,
                  const InnerConfig& cfg, Exec exec) {
  SplatResidual map = make_splat_residual(p0, ctx, exec);
  return run_tto(map, p0.data(), lam_eff, cfg, per_group_rates(p0.num_gaussians(), cfg.rates));
}

std::string tto_report_csv(const TtoReport& report) {
  std::string out = "step,inner_loss\n";
  char line[64];
  for (size_t i = 0; i < report.loss_trace.size(); ++i) {
    std::snprintf(line, sizeof(line), "%zu,%.17g\n", i, report.loss_trace[i]);
    out += line;
  }
  return out;
}

}  // namespace iftsplat
