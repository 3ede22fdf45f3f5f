#include "iftsplat/meta.hpp"

#include <cmath>
#include <cstdio>

#include "json.hpp"

namespace iftsplat {

RegWeights lambda_weights(const MetaParams& mp) {
  Vector lam(mp.lam_raw.size());
  for (int i = 0; i < mp.lam_raw.size(); ++i) lam[i] = softplus(mp.lam_raw[i]) + kLambdaMin;
  return RegWeights(std::move(lam));
}

LossAndGrad outer_loss(const ParamVector& p_star, const ContextSet& novel, Exec exec) {
  const ResidualVector r = residual(p_star, novel, exec);
  LossAndGrad out;
  out.loss = r.data.squaredNorm();  // == MSE under the 1/sqrt(count) scaling
  out.grad = vjp(p_star, novel, 2.0 * r.data, exec);
  return out;
}

LossAndGrad proxy_loss(const ParamVector& p0, const ContextSet& supervision,
                       double lambda_proxy, Exec exec) {
  LossAndGrad out;
  if (lambda_proxy == 0.0) {
    out.grad = Vector::Zero(p0.size());
    return out;
  }
  const ResidualVector r = residual(p0, supervision, exec);
  out.loss = lambda_proxy * r.data.squaredNorm();
  out.grad = lambda_proxy * vjp(p0, supervision, 2.0 * r.data, exec);
  return out;
}

std::pair<MetaParams, MetaStepDiag> meta_step(const MetaParams& mp,
                                              const std::vector<TaskInstance>& tasks,
                                              const MetaConfig& cfg, bool stage2,
                                              int scaler_task, Exec exec) {
  if (tasks.empty()) throw ShapeError("meta_step: empty batch");
  const int n = mp.theta0.size();
  const RegWeights lam = lambda_weights(mp);
  const RegWeights lam_eff = effective_damping(lam, mp.scaler, mp.lambda_global);

  struct TaskGrad {
    Vector g_theta;
    Vector g_lam_raw;
    double outer = 0.0, proxy = 0.0, inner_final = 0.0, stationarity = 0.0;
    int pcg_iters = 0;
    bool untrusted = false, stalled = false;
  };
  std::vector<TaskGrad> per_task(tasks.size());
  Vector scaler_diag;

  run_indexed(static_cast<int>(tasks.size()), exec, [&](int ti) {
    const TaskInstance& task = tasks[ti];
    TaskGrad& tg = per_task[ti];
    const ContextSet supervision = concat(task.context, task.novel);
    if (!stage2) {
      const LossAndGrad zero_shot = outer_loss(mp.theta0, task.novel, exec);
      const LossAndGrad prox = proxy_loss(mp.theta0, supervision, cfg.lambda_proxy, exec);
      tg.outer = zero_shot.loss;
      tg.proxy = prox.loss;
      tg.g_theta = zero_shot.grad + prox.grad;
      tg.g_lam_raw = Vector::Zero(n);
      return;
    }
    const TtoResult tto = run_tto(mp.theta0, lam_eff, task.context, cfg.inner, exec);
    const ParamVector p_star{tto.p_star};
    const LossAndGrad outer = outer_loss(p_star, task.novel, exec);
    const BackwardResult bw =
        implicit_backward(p_star, mp.theta0, lam, mp.scaler, task.context, outer.grad,
                          cfg.pcg, mp.lambda_global, cfg.inner.stationarity_tol, exec);
    const LossAndGrad prox = proxy_loss(mp.theta0, supervision, cfg.lambda_proxy, exec);
    tg.outer = outer.loss;
    tg.proxy = prox.loss;
    tg.inner_final = tto.report.loss_trace.back();
    tg.stationarity = bw.stationarity_at_solve;
    tg.pcg_iters = bw.solver_iters;
    tg.untrusted = !bw.trusted;
    tg.stalled = bw.stalled;
    tg.g_theta = bw.grad_init + prox.grad;
    // Chain Lambda = softplus(lam_raw) + floor.
    tg.g_lam_raw = Vector(n);
    for (int i = 0; i < n; ++i) tg.g_lam_raw[i] = bw.grad_lam[i] * sigmoid(mp.lam_raw[i]);
    if (ti == scaler_task) scaler_diag = exact_diag(p_star, task.context, exec);
  });

  // Fixed-order fold over the batch.
  Vector g_theta = Vector::Zero(n);
  Vector g_lam_raw = Vector::Zero(n);
  MetaStepDiag diag;
  for (const TaskGrad& tg : per_task) {
    g_theta += tg.g_theta;
    g_lam_raw += tg.g_lam_raw;
    diag.outer_loss_mean += tg.outer;
    diag.proxy_loss_mean += tg.proxy;
    diag.inner_final_loss_mean += tg.inner_final;
    diag.stationarity_mean += tg.stationarity;
    diag.pcg_iters_mean += tg.pcg_iters;
    diag.untrusted += tg.untrusted ? 1 : 0;
    diag.stalled += tg.stalled ? 1 : 0;
  }
  const double inv = 1.0 / static_cast<double>(tasks.size());
  g_theta *= inv;
  g_lam_raw *= inv;
  diag.outer_loss_mean *= inv;
  diag.proxy_loss_mean *= inv;
  diag.inner_final_loss_mean *= inv;
  diag.stationarity_mean *= inv;
  diag.pcg_iters_mean *= inv;

  MetaParams next = mp;
  next.theta0 = ParamVector(mp.theta0.data() - cfg.outer_lr * g_theta);
  if (stage2) {
    // The raw-weight gradient carries the lambda_global*M chain, whose scale
    // spans several decades across attribute groups; undo it with a fixed
    // diagonal preconditioner so one rate serves every group.
    const Vector chain = mp.scaler.initialized
                             ? Vector(mp.lambda_global * mp.scaler.m)
                             : Vector(Vector::Constant(n, mp.lambda_global));
    const Vector precond = chain.cwiseMax(kScalerFloor).cwiseInverse();
    next.lam_raw = mp.lam_raw - cfg.outer_lr_lam * precond.cwiseProduct(g_lam_raw);
    if (scaler_diag.size() > 0) next.scaler = update_scaler(mp.scaler, scaler_diag);
  }
  return {std::move(next), diag};
}

std::vector<EvalRow> evaluate(const MetaParams& mp, const std::vector<TaskInstance>& tasks,
                              const EvalOptions& opts, Exec exec) {
  const RegWeights lam = opts.lam_override ? *opts.lam_override : lambda_weights(mp);
  const DiagScaler scaler =
      opts.use_scaler ? mp.scaler : DiagScaler::unit(static_cast<int>(mp.theta0.size()));
  const RegWeights lam_eff = effective_damping(lam, scaler, mp.lambda_global);

  std::vector<EvalRow> rows(tasks.size());
  run_indexed(static_cast<int>(tasks.size()), exec, [&](int ti) {
    const TaskInstance& task = tasks[ti];
    EvalRow& row = rows[ti];
    row.task_id = task.id;

    auto pooled_psnr = [&](const ParamVector& p) {
      double se = 0.0;
      long count = 0;
      for (const View& view : task.novel.views) {
        const ImageBuffer img = render(p, view.camera, exec);
        for (size_t i = 0; i < img.data.size(); ++i) {
          const double d = img.data[i] - view.image.data[i];
          se += d * d;
        }
        count += img.value_count();
      }
      return psnr_from_mse(se / static_cast<double>(count));
    };

    row.psnr_before = pooled_psnr(mp.theta0);
    const TtoResult tto = run_tto(mp.theta0, lam_eff, task.context, opts.inner, exec);
    row.psnr_after = pooled_psnr(ParamVector(tto.p_star));
    row.delta = row.psnr_after - row.psnr_before;
    row.converged = tto.report.converged;
    row.stationarity = tto.report.final_stationarity;
  });
  return rows;
}

std::string eval_rows_csv(const std::vector<EvalRow>& rows) {
  std::string out = "task_id,psnr_before,psnr_after,delta,converged,stationarity\n";
  char line[256];
  for (const EvalRow& r : rows) {
    std::snprintf(line, sizeof(line), "%s,%.17g,%.17g,%.17g,%d,%.17g\n", r.task_id.c_str(),
                  r.psnr_before, r.psnr_after, r.delta, r.converged ? 1 : 0, r.stationarity);
    out += line;
  }
  return out;
}

std::string checkpoint_json(const MetaParams& mp) {
  nlohmann::json j;
  j["theta0"] = nlohmann::json::parse(to_json(mp.theta0));
  j["lam_raw"] = std::vector<double>(mp.lam_raw.data(), mp.lam_raw.data() + mp.lam_raw.size());
  j["scaler"]["m"] =
      std::vector<double>(mp.scaler.m.data(), mp.scaler.m.data() + mp.scaler.m.size());
  j["scaler"]["decay"] = mp.scaler.decay;
  j["scaler"]["initialized"] = mp.scaler.initialized;
  j["lambda_global"] = mp.lambda_global;
  return j.dump();
}

MetaParams checkpoint_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  MetaParams mp;
  mp.theta0 = param_vector_from_json(j["theta0"].dump());
  const auto lam = j["lam_raw"].get<std::vector<double>>();
  mp.lam_raw = Eigen::Map<const Vector>(lam.data(), lam.size());
  const auto m = j["scaler"]["m"].get<std::vector<double>>();
  mp.scaler.m = Eigen::Map<const Vector>(m.data(), m.size());
  mp.scaler.decay = j["scaler"]["decay"].get<double>();
  mp.scaler.initialized = j["scaler"]["initialized"].get<bool>();
  mp.lambda_global = j["lambda_global"].get<double>();
  if (mp.lam_raw.size() != mp.theta0.size())
    throw IoError("checkpoint: lam_raw length does not match theta0");
  return mp;
}

}  // namespace iftsplat
