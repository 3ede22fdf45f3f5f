#pragma once

#include <optional>
#include <string>
#include <vector>

#include "iftsplat/implicit_grad.hpp"
#include "iftsplat/inner_opt.hpp"

namespace iftsplat {

/// One synthetic scene: self-rendered ground truth, context views for the
/// inner problem, novel views for the outer loss.
struct TaskInstance {
  ParamVector gt_params;
  ContextSet context;
  ContextSet novel;
  std::string id;
};

/// Learnable meta-parameters standing in for the feed-forward prediction:
/// a shared initialization and shared per-parameter uncertainty weights
/// Lambda = softplus(lam_raw) + kLambdaMin.
struct MetaParams {
  ParamVector theta0;
  Vector lam_raw;
  DiagScaler scaler;
  double lambda_global = 1.0;
};

RegWeights lambda_weights(const MetaParams& mp);

struct MetaConfig {
  int stage1_steps = 400;
  int stage2_steps = 120;
  double outer_lr = 0.5;
  double outer_lr_lam = 0.5;
  double lambda_proxy = 0.1;
  int batch = 4;
  std::uint64_t seed = 0;
  InnerConfig inner;
  PcgConfig pcg;
};

struct EvalRow {
  std::string task_id;
  double psnr_before = 0.0;
  double psnr_after = 0.0;
  double delta = 0.0;
  bool converged = false;
  double stationarity = 0.0;
};

struct LossAndGrad {
  double loss = 0.0;
  Vector grad;
};

/// Mean squared novel-view error and its gradient w.r.t. the splat
/// parameters (via the renderer VJP).
LossAndGrad outer_loss(const ParamVector& p_star, const ContextSet& novel,
                       Exec exec = Exec::parallel);

/// Auxiliary zero-shot anchor: lambda_proxy * MSE(render(p0), supervision).
LossAndGrad proxy_loss(const ParamVector& p0, const ContextSet& supervision,
                       double lambda_proxy, Exec exec = Exec::parallel);

struct MetaStepDiag {
  double outer_loss_mean = 0.0;
  double proxy_loss_mean = 0.0;
  double inner_final_loss_mean = 0.0;
  double stationarity_mean = 0.0;
  double pcg_iters_mean = 0.0;
  int untrusted = 0;
  int stalled = 0;
};

/// One outer step over a batch of tasks. Stage 1 sets Theta* = Theta0 and
/// trains on the zero-shot objective; stage 2 runs TTO per task and
/// backpropagates through it with the implicit gradients. The scaler update
/// (stage 2) uses exact_diag at Theta* of the task `scaler_task`, after the
/// gradient step is assembled.
std::pair<MetaParams, MetaStepDiag> meta_step(const MetaParams& mp,
                                              const std::vector<TaskInstance>& tasks,
                                              const MetaConfig& cfg, bool stage2,
                                              int scaler_task = 0,
                                              Exec exec = Exec::parallel);

struct EvalOptions {
  std::optional<RegWeights> lam_override;  // default: learned Lambda
  bool use_scaler = true;                  // multiply by the moving-average M
  InnerConfig inner;
};

std::vector<EvalRow> evaluate(const MetaParams& mp, const std::vector<TaskInstance>& tasks,
                              const EvalOptions& opts, Exec exec = Exec::parallel);

std::string eval_rows_csv(const std::vector<EvalRow>& rows);

/// Checkpoint (de)serialization: parameter JSON plus lam_raw and scaler state.
std::string checkpoint_json(const MetaParams& mp);
MetaParams checkpoint_from_json(const std::string& text);

}  // namespace iftsplat
