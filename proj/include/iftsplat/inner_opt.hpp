#pragma once

#include <vector>

#include "iftsplat/residual_map.hpp"

namespace iftsplat {

/// Per-attribute-group gradient-descent rates for the splat parameter layout.
struct GroupRates {
  double mean = 1e-3;
  double log_scale = 5e-3;
  double rot = 1e-3;
  double opacity = 5e-2;
  double color = 1e-2;
};

struct InnerConfig {
  int steps = 50;
  GroupRates rates;
  double uniform_rate = 1e-2;  // used for non-splat parameter spaces
  double stationarity_tol = 1e-3;
  int max_halvings = 5;     // per-step retries when the loss increases; 0 disables
  double increase_slack = 0.10;
};

struct TtoReport {
  std::vector<double> loss_trace;  // steps+1 entries, includes the initial loss
  double final_stationarity = 0.0;
  bool converged = false;
  bool aborted_non_finite = false;
  int halvings = 0;
  int rejected_steps = 0;  // steps where every retry failed and the iterate was kept
};

/// Per-coordinate step sizes from the group rates (splat layout).
Vector per_group_rates(int num_gaussians, const GroupRates& rates);

/// 0.5*||r(p)||^2 + 0.5*(p-p0)^T diag(lam_eff) (p-p0). `lam_eff` is the
/// effective weight vector (lambda_global * Lambda . M), assembled by the
/// caller via effective_damping.
double inner_loss(const ResidualMap& map, const Vector& p, const Vector& p0,
                  const RegWeights& lam_eff);
double inner_loss(const ParamVector& p, const ParamVector& p0, const RegWeights& lam_eff,
                  const ContextSet& ctx, Exec exec = Exec::parallel);

/// J^T r + lam_eff . (p - p0).
Vector inner_grad(const ResidualMap& map, const Vector& p, const Vector& p0,
                  const RegWeights& lam_eff);
Vector inner_grad(const ParamVector& p, const ParamVector& p0, const RegWeights& lam_eff,
                  const ContextSet& ctx, Exec exec = Exec::parallel);

struct TtoResult {
  Vector p_star;
  TtoReport report;
};

/// Gradient descent for cfg.steps steps with per-coordinate rates. A step
/// that would raise the loss by more than cfg.increase_slack retries with a
/// halved rate (up to cfg.max_halvings); if every retry fails the iterate is
/// kept unchanged for that step.
TtoResult run_tto(const ResidualMap& map, const Vector& p0, const RegWeights& lam_eff,
                  const InnerConfig& cfg, const Vector& rates);

/// Splat convenience wrapper using the per-group rates.
TtoResult run_tto(const ParamVector& p0, const RegWeights& lam_eff, const ContextSet& ctx,
                  const InnerConfig& cfg, Exec exec = Exec::parallel);

/// CSV rows "step,inner_loss".
std::string tto_report_csv(const TtoReport& report);

}  // namespace iftsplat
