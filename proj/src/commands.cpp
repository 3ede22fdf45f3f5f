#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "iftsplat/harness.hpp"

namespace iftsplat {

namespace fs = std::filesystem;

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for write: " + path);
  f << text;
}

std::string read_text(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open for read: " + path);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

struct FamilyFlags {
  std::uint64_t seed = 0;
  int tasks = 8;
  int image_size = 32;
  int gaussians = 16;
  double exposure = 0.0;

  TaskSpec spec(int index) const {
    TaskSpec s;
    s.family_seed = seed;
    s.seed = static_cast<std::uint64_t>(index);
    s.width = s.height = image_size;
    s.num_gaussians = gaussians;
    s.exposure_corruption = exposure;
    return s;
  }
};

void add_family_flags(CLI::App* cmd, FamilyFlags& f) {
  cmd->add_option("--seed", f.seed, "family seed");
  cmd->add_option("--tasks", f.tasks, "number of tasks");
  cmd->add_option("--image-size", f.image_size, "square image side in pixels");
  cmd->add_option("--gaussians", f.gaussians, "Gaussians per scene");
  cmd->add_option("--exposure", f.exposure, "exposure offset on one context view");
}

int cmd_gen(const FamilyFlags& family, const std::string& out_dir, bool embed) {
  fs::create_directories(out_dir);
  for (int i = 0; i < family.tasks; ++i) {
    const TaskSpec spec = family.spec(i);
    const TaskInstance task = gen_task(spec);
    char name[64];
    std::snprintf(name, sizeof(name), "task_%04d.json", i);
    write_task((fs::path(out_dir) / name).string(), task, spec, embed);
  }
  std::printf("gen: wrote %d tasks to %s\n", family.tasks, out_dir.c_str());
  return 0;
}

int cmd_gradcheck(const GradcheckOptions& opts, const std::string& out_csv) {
  const GradcheckResult res = run_gradcheck(opts);
  if (!out_csv.empty()) write_text(out_csv, check_rows_csv(res.rows));
  for (const CheckRow& row : res.rows)
    std::printf("%-38s %s  (rel_err %.3g)\n", row.name.c_str(), row.pass ? "PASS" : "FAIL",
                row.rel_err);
  if (opts.break_stationarity)
    std::printf("untrusted rate with 2 inner steps: %.3g\n", res.untrusted_rate);
  std::printf("gradcheck: %s\n", res.all_pass ? "all checks passed" : "FAILURES present");
  return res.all_pass ? 0 : 1;
}

MetaParams load_checkpoint(const std::string& path) {
  std::ifstream probe(path);
  if (!probe) throw MissingInput("missing checkpoint: " + path);
  probe.close();
  return checkpoint_from_json(read_text(path));
}

RegWeights lam_for_mode(const MetaParams& mp, const std::string& mode, double lam_const) {
  if (mode == "learned") return lambda_weights(mp);
  if (mode == "min") return RegWeights::constant(mp.theta0.size(), kLambdaMin);
  if (mode == "const") return RegWeights::constant(mp.theta0.size(), lam_const);
  throw IoError("unknown --lam mode: " + mode);
}

void scale_rates(GroupRates& rates, double scale) {
  rates.mean *= scale;
  rates.log_scale *= scale;
  rates.rot *= scale;
  rates.opacity *= scale;
  rates.color *= scale;
}

int cmd_tto(const std::string& tasks_dir, const std::string& checkpoint,
            const std::string& out_dir, int steps, const std::string& lam_mode,
            double lam_const, double lambda_global, double lr_scale) {
  const MetaParams mp = load_checkpoint(checkpoint);
  const std::vector<TaskInstance> tasks = read_task_dir(tasks_dir);
  fs::create_directories(out_dir);

  InnerConfig inner;
  inner.steps = steps;
  scale_rates(inner.rates, lr_scale);
  MetaParams mp_eval = mp;
  mp_eval.lambda_global = lambda_global;
  const RegWeights lam = lam_for_mode(mp_eval, lam_mode, lam_const);
  const bool use_scaler = lam_mode == "learned";
  const DiagScaler scaler =
      use_scaler ? mp_eval.scaler : DiagScaler::unit(mp_eval.theta0.size());
  const RegWeights lam_eff = effective_damping(lam, scaler, lambda_global);

  for (const TaskInstance& task : tasks) {
    const TtoResult res = run_tto(mp_eval.theta0, lam_eff, task.context, inner);
    write_text((fs::path(out_dir) / ("tto_" + task.id + ".csv")).string(),
               tto_report_csv(res.report));
    for (size_t v = 0; v < task.novel.views.size(); ++v) {
      const Camera& cam = task.novel.views[v].camera;
      write_ppm((fs::path(out_dir) / (task.id + "_before_nov" + std::to_string(v) + ".ppm"))
                    .string(),
                render(mp_eval.theta0, cam));
      write_ppm((fs::path(out_dir) / (task.id + "_after_nov" + std::to_string(v) + ".ppm"))
                    .string(),
                render(ParamVector(res.p_star), cam));
    }
  }
  std::printf("tto: processed %zu tasks into %s\n", tasks.size(), out_dir.c_str());
  return 0;
}

int cmd_meta_train(const FamilyFlags& family, const std::string& out_dir, int stage1,
                   int stage2, int batch, double outer_lr, double outer_lr_lam,
                   double lambda_global, double pcg_tol, int inner_steps, double lr_scale) {
  fs::create_directories(out_dir);
  MetaConfig cfg;
  cfg.stage1_steps = stage1;
  cfg.stage2_steps = stage2;
  cfg.batch = batch;
  cfg.outer_lr = outer_lr;
  cfg.outer_lr_lam = outer_lr_lam;
  cfg.seed = family.seed;
  cfg.inner.steps = inner_steps;
  scale_rates(cfg.inner.rates, lr_scale);
  cfg.pcg.tol = pcg_tol;

  const TaskSpec proto = family.spec(0);
  MetaParams mp;
  mp.lambda_global = lambda_global;
  mp.theta0 = perturbed(base_scene(proto), 2.5, mix_seed(family.seed, 0xa11ceULL));
  mp.lam_raw = Vector::Constant(mp.theta0.size(), std::log(std::expm1(1.0)));  // Lambda ~ 1
  mp.scaler.m = Vector::Ones(mp.theta0.size());

  std::string log = "step,stage,outer_loss,proxy_loss,inner_final,stationarity,pcg_iters,untrusted,stalled\n";
  char line[256];
  const int total = cfg.stage1_steps + cfg.stage2_steps;
  for (int step = 0; step < total; ++step) {
    const bool stage2_active = step >= cfg.stage1_steps;
    std::vector<TaskInstance> batch_tasks;
    for (int b = 0; b < cfg.batch; ++b) {
      TaskSpec spec = proto;
      spec.seed = mix_seed(cfg.seed, 0x57e9ULL, static_cast<std::uint64_t>(step) * cfg.batch + b);
      batch_tasks.push_back(gen_task(spec));
    }
    const auto [next, diag] =
        meta_step(mp, batch_tasks, cfg, stage2_active, step % cfg.batch);
    mp = next;
    std::snprintf(line, sizeof(line), "%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%d\n", step,
                  stage2_active ? 2 : 1, diag.outer_loss_mean, diag.proxy_loss_mean,
                  diag.inner_final_loss_mean, diag.stationarity_mean, diag.pcg_iters_mean,
                  diag.untrusted, diag.stalled);
    log += line;
    if (step + 1 == cfg.stage1_steps)
      write_text((fs::path(out_dir) / "checkpoint_stage1.json").string(), checkpoint_json(mp));
  }
  if (cfg.stage2_steps == 0)
    write_text((fs::path(out_dir) / "checkpoint_stage1.json").string(), checkpoint_json(mp));
  write_text((fs::path(out_dir) / "checkpoint.json").string(), checkpoint_json(mp));
  write_text((fs::path(out_dir) / "train_log.csv").string(), log);
  std::printf("meta-train: %d steps (%d stage-2), checkpoints in %s\n", total,
              cfg.stage2_steps, out_dir.c_str());
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& tasks_dir,
             const std::string& out_csv, int steps, const std::string& lam_mode,
             double lam_const, double lambda_global, double lr_scale) {
  MetaParams mp = load_checkpoint(checkpoint);
  mp.lambda_global = lambda_global;
  const std::vector<TaskInstance> tasks = read_task_dir(tasks_dir);
  EvalOptions opts;
  opts.inner.steps = steps;
  scale_rates(opts.inner.rates, lr_scale);
  opts.lam_override = lam_for_mode(mp, lam_mode, lam_const);
  opts.use_scaler = lam_mode == "learned";
  const std::vector<EvalRow> rows = evaluate(mp, tasks, opts);
  write_text(out_csv, eval_rows_csv(rows));
  double mean_delta = 0.0;
  for (const EvalRow& r : rows) mean_delta += r.delta;
  std::printf("eval: %zu tasks, mean delta %+.4f dB -> %s\n", rows.size(),
              mean_delta / rows.size(), out_csv.c_str());
  return 0;
}

struct EvalSummary {
  double before = 0.0, after = 0.0, delta = 0.0;
  int count = 0;
};

EvalSummary summarize_eval_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open eval csv: " + path);
  std::string header;
  std::getline(f, header);
  EvalSummary s;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    double before = 0.0, after = 0.0;
    const size_t c1 = line.find(',');
    if (c1 == std::string::npos ||
        std::sscanf(line.c_str() + c1 + 1, "%lf,%lf", &before, &after) != 2)
      throw IoError("eval csv: malformed row in " + path);
    s.before += before;
    s.after += after;
    ++s.count;
  }
  if (s.count == 0) throw IoError("eval csv: no rows in " + path);
  s.before /= s.count;
  s.after /= s.count;
  s.delta = s.after - s.before;
  return s;
}

int cmd_report(const std::vector<std::string>& labeled_evals, const std::string& out_md) {
  std::string md = "# Test-time optimization report\n\n";
  md += "| config | PSNR before | PSNR after | delta (dB) | tasks |\n";
  md += "|---|---|---|---|---|\n";
  char line[256];
  for (const std::string& spec : labeled_evals) {
    const size_t eq = spec.find('=');
    if (eq == std::string::npos) throw IoError("--eval expects label=path, got: " + spec);
    const std::string label = spec.substr(0, eq);
    const EvalSummary s = summarize_eval_csv(spec.substr(eq + 1));
    std::snprintf(line, sizeof(line), "| %s | %.3f | %.3f | %+.3f | %d |\n", label.c_str(),
                  s.before, s.after, s.delta, s.count);
    md += line;
  }
  write_text(out_md, md);
  std::printf("report: wrote %s\n", out_md.c_str());
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Differentiable Gaussian-splatting test-time optimization harness"};
  app.require_subcommand(1);

  // gen
  FamilyFlags gen_family;
  std::string gen_out = "tasks";
  bool gen_embed = false;
  CLI::App* gen = app.add_subcommand("gen", "generate synthetic tasks");
  add_family_flags(gen, gen_family);
  gen->add_option("--out", gen_out, "output directory");
  gen->add_flag("--embed-images", gen_embed, "embed images as base64 instead of sidecar PPM");

  // gradcheck
  GradcheckOptions gc;
  std::string gc_out = "gradcheck.csv";
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "run the gradient oracle suite");
  gradcheck->add_option("--seed", gc.seed, "suite seed");
  gradcheck->add_option("--out", gc_out, "CSV report path");
  gradcheck->add_flag("--quadratic-only", gc.quadratic_only, "closed-form oracle checks only");
  gradcheck->add_flag("--break-stationarity", gc.break_stationarity,
                      "cut TTO to 2 steps and report the untrusted-flag rate");
  gradcheck->add_option("--splat-tasks", gc.splat_tasks, "splat tasks in the suite");
  gradcheck->add_option("--quad-tasks", gc.quad_tasks, "quadratic tasks in the suite");

  // tto
  std::string tto_tasks, tto_ckpt, tto_out = "tto_out", tto_lam = "learned";
  int tto_steps = 50;
  double tto_lam_const = 1e-2, tto_lambda_global = 1.0, tto_lr_scale = 1.0;
  CLI::App* tto = app.add_subcommand("tto", "test-time optimization on task files");
  tto->add_option("--tasks", tto_tasks, "task directory")->required();
  tto->add_option("--checkpoint", tto_ckpt, "meta checkpoint JSON")->required();
  tto->add_option("--out", tto_out, "output directory");
  tto->add_option("--steps", tto_steps, "inner steps");
  tto->add_option("--lam", tto_lam, "learned|min|const");
  tto->add_option("--lam-const", tto_lam_const, "constant lambda value for --lam const");
  tto->add_option("--lambda-global", tto_lambda_global, "global damping scale");
  tto->add_option("--lr-scale", tto_lr_scale, "scale on the per-group inner rates");

  // meta-train
  FamilyFlags mt_family;
  std::string mt_out = "train_out";
  int mt_stage1 = 400, mt_stage2 = 120, mt_batch = 4, mt_inner_steps = 30;
  double mt_lr = 0.5, mt_lr_lam = 0.5, mt_lambda_global = 1.0, mt_pcg_tol = 1e-6,
         mt_lr_scale = 1.0;
  CLI::App* meta_train = app.add_subcommand("meta-train", "two-stage meta training");
  add_family_flags(meta_train, mt_family);
  meta_train->add_option("--out", mt_out, "output directory");
  meta_train->add_option("--stage1", mt_stage1, "stage-1 steps");
  meta_train->add_option("--stage2", mt_stage2, "stage-2 steps");
  meta_train->add_option("--batch", mt_batch, "tasks per outer step");
  meta_train->add_option("--outer-lr", mt_lr, "outer learning rate");
  meta_train->add_option("--outer-lr-lam", mt_lr_lam, "outer rate for the uncertainty weights");
  meta_train->add_option("--steps", mt_inner_steps, "inner TTO steps during training");
  meta_train->add_option("--lambda-global", mt_lambda_global, "global damping scale");
  meta_train->add_option("--pcg-tol", mt_pcg_tol, "PCG relative tolerance");
  meta_train->add_option("--lr-scale", mt_lr_scale, "scale on the per-group inner rates");

  // eval
  std::string ev_ckpt, ev_tasks, ev_out = "eval.csv", ev_lam = "learned";
  int ev_steps = 50;
  double ev_lam_const = 1e-2, ev_lambda_global = 1.0, ev_lr_scale = 1.0;
  CLI::App* eval_cmd = app.add_subcommand("eval", "before/after TTO evaluation");
  eval_cmd->add_option("--checkpoint", ev_ckpt, "meta checkpoint JSON")->required();
  eval_cmd->add_option("--tasks", ev_tasks, "task directory")->required();
  eval_cmd->add_option("--out", ev_out, "CSV output path");
  eval_cmd->add_option("--steps", ev_steps, "inner TTO steps");
  eval_cmd->add_option("--lam", ev_lam, "learned|min|const");
  eval_cmd->add_option("--lam-const", ev_lam_const, "constant lambda value for --lam const");
  eval_cmd->add_option("--lambda-global", ev_lambda_global, "global damping scale");
  eval_cmd->add_option("--lr-scale", ev_lr_scale, "scale on the per-group inner rates");

  // report
  std::vector<std::string> rp_evals;
  std::string rp_out = "report.md";
  CLI::App* report = app.add_subcommand("report", "aggregate eval CSVs into a markdown table");
  report->add_option("--eval", rp_evals, "label=eval.csv (repeatable)")->required();
  report->add_option("--out", rp_out, "markdown output path");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen) return cmd_gen(gen_family, gen_out, gen_embed);
    if (*gradcheck) return cmd_gradcheck(gc, gc_out);
    if (*tto)
      return cmd_tto(tto_tasks, tto_ckpt, tto_out, tto_steps, tto_lam, tto_lam_const,
                     tto_lambda_global, tto_lr_scale);
    if (*meta_train)
      return cmd_meta_train(mt_family, mt_out, mt_stage1, mt_stage2, mt_batch, mt_lr,
                            mt_lr_lam, mt_lambda_global, mt_pcg_tol, mt_inner_steps,
                            mt_lr_scale);
    if (*eval_cmd)
      return cmd_eval(ev_ckpt, ev_tasks, ev_out, ev_steps, ev_lam, ev_lam_const,
                      ev_lambda_global, ev_lr_scale);
    if (*report) return cmd_report(rp_evals, rp_out);
  } catch (const MissingInput& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}

}  // namespace iftsplat
