#include <cmath>
#include <cstdio>

#include "iftsplat/harness.hpp"
#include "iftsplat/oracles.hpp"
#include "iftsplat/render/kernels.hpp"

namespace iftsplat {

ParamVector perturbed(const ParamVector& p, double sigma, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0xbeefULL));
  Vector data = p.data();
  for (int i = 0; i < p.num_gaussians(); ++i) {
    double* d = data.data() + kStride * i;
    for (int k = 0; k < 3; ++k) d[kMeanOff + k] += rng.normal(0.0, sigma * 0.05);
    for (int k = 0; k < 3; ++k) d[kLogScaleOff + k] += rng.normal(0.0, sigma * 0.1);
    for (int k = 0; k < 4; ++k) d[kRotOff + k] += rng.normal(0.0, sigma * 0.05);
    d[kOpacityOff] += rng.normal(0.0, sigma * 0.3);
    for (int k = 0; k < 3; ++k) d[kColorOff + k] += rng.normal(0.0, sigma * 0.4);
  }
  return ParamVector(std::move(data));
}

// A candidate is accepted when every Gaussian stays clear of the culling,
// footprint and alpha thresholds in every view.
static bool well_conditioned(const ParamVector& p, const std::vector<Camera>& cams) {
  const auto gs_all = activate(p);
  for (const Camera& cam : cams) {
    const auto screen = detail::prepare_view(p.raw(), p.num_gaussians(), cam);
    std::vector<double> depths;
    for (const auto& sg : screen) {
      if (!sg.valid || value_of(sg.depth) < 0.5) return false;
      depths.push_back(value_of(sg.depth));
      // Full-image coverage with margin: power <= 4.0 at the far corners and
      // alpha comfortably above the 1/255 cutoff everywhere.
      double worst_power = 0.0;
      for (int cy = 0; cy <= 1; ++cy)
        for (int cx = 0; cx <= 1; ++cx) {
          const double dx = (cx ? cam.width - 0.5 : 0.5) - sg.mean2d.x;
          const double dy = (cy ? cam.height - 0.5 : 0.5) - sg.mean2d.y;
          const double power =
              0.5 * (sg.conic.a * dx * dx + 2.0 * sg.conic.b * dx * dy + sg.conic.c * dy * dy);
          worst_power = std::max(worst_power, power);
        }
      if (worst_power > 4.0) return false;
      if (sg.opacity * std::exp(-worst_power) < 1.3 / 255.0) return false;
      if (sg.opacity > 0.95) return false;
    }
    std::sort(depths.begin(), depths.end());
    for (size_t i = 1; i < depths.size(); ++i)
      if (depths[i] - depths[i - 1] < 0.05) return false;
  }
  return true;
}

TaskInstance gradcheck_task(std::uint64_t seed, int size, int num_views, int num_gaussians) {
  const double radius = 2.0;
  const double focal = 2.5 * size;
  for (std::uint64_t attempt = 0; attempt < 64; ++attempt) {
    Rng rng(mix_seed(seed, attempt, 0x6c3aULL));
    std::vector<GaussianAttrib> gs(num_gaussians);
    for (GaussianAttrib& g : gs) {
      g.mean = {rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2)};
      const double s_world = rng.uniform(0.28, 0.42) * radius / focal * size;
      g.log_scale = {std::log(s_world * rng.uniform(0.9, 1.1)),
                     std::log(s_world * rng.uniform(0.9, 1.1)),
                     std::log(s_world * rng.uniform(0.9, 1.1))};
      Quat<double> q{1.0 + rng.normal(0.0, 0.2), rng.normal(0.0, 0.2), rng.normal(0.0, 0.2),
                     rng.normal(0.0, 0.2)};
      g.rot = q;
      g.opacity_logit = rng.uniform(-0.3, 1.0);
      g.color = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    }
    const ParamVector gt = pack(gs);

    std::vector<Camera> cams;
    for (int v = 0; v < num_views; ++v) {
      const double angle = 2.0 * M_PI * v / std::max(num_views, 2) * 0.45 +
                           rng.normal(0.0, 0.05);
      const Vec3<double> eye{radius * std::cos(angle), radius * std::sin(angle),
                             rng.normal(0.0, 0.1)};
      cams.push_back(look_at(eye, {0.0, 0.0, 0.0}, focal, focal, size, size));
    }
    if (!well_conditioned(gt, cams)) continue;

    std::vector<Camera> novel_cams = {cams.back()};
    char id[48];
    std::snprintf(id, sizeof(id), "gradcheck_%llu", static_cast<unsigned long long>(seed));
    return render_task(gt, cams, novel_cams, 0.0, 0, id);
  }
  throw ShapeError("gradcheck_task: could not sample a well-conditioned task");
}

namespace {

// Relative error with a unit floor: strict for O(1) entries, absolute for
// entries near zero (below the finite-difference noise floor).
double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

struct Suite {
  std::vector<CheckRow> rows;
  bool all_pass = true;

  void add(const std::string& name, double analytic, double oracle, double tol) {
    CheckRow row;
    row.name = name;
    row.analytic = analytic;
    row.oracle = oracle;
    row.abs_err = std::abs(analytic - oracle);
    row.rel_err = rel_err(analytic, oracle);
    row.pass = row.rel_err < tol;
    all_pass = all_pass && row.pass;
    rows.push_back(row);
  }
  // For scalar criteria already expressed as an error measure vs a bound.
  void add_bound(const std::string& name, double value, double bound) {
    CheckRow row;
    row.name = name;
    row.analytic = value;
    row.oracle = bound;
    row.abs_err = value;
    row.rel_err = value;
    row.pass = value < bound;
    all_pass = all_pass && row.pass;
    rows.push_back(row);
  }
};

Eigen::MatrixXd jacobian_via_jvp(const ResidualMap& map, const Vector& p) {
  Eigen::MatrixXd J(map.residual_dim(), map.param_dim());
  Vector e = Vector::Zero(map.param_dim());
  for (int k = 0; k < map.param_dim(); ++k) {
    e[k] = 1.0;
    J.col(k) = map.jvp(p, e);
    e[k] = 0.0;
  }
  return J;
}

void splat_checks(Suite& suite, std::uint64_t seed, int task_index) {
  const TaskInstance task = gradcheck_task(mix_seed(seed, task_index), 4, 2, 2);
  const ParamVector p = perturbed(task.gt_params, 1.0, mix_seed(seed, task_index, 1));
  const SplatResidual map = make_splat_residual(p, task.context);
  Rng rng(mix_seed(seed, task_index, 2));
  const std::string tag = "t" + std::to_string(task_index);

  const Eigen::MatrixXd J = jacobian_via_jvp(map, p.data());
  const Eigen::MatrixXd Jfd = oracles::dense_jacobian(map, p.data());
  double worst = 0.0;
  double wa = 0.0, wf = 0.0;
  for (int r = 0; r < J.rows(); ++r)
    for (int c = 0; c < J.cols(); ++c) {
      const double e = rel_err(J(r, c), Jfd(r, c));
      if (e > worst) {
        worst = e;
        wa = J(r, c);
        wf = Jfd(r, c);
      }
    }
  suite.add("jvp_vs_dense_fd_" + tag, wa, wf, 1e-4);

  Vector u(map.residual_dim()), w(map.param_dim());
  for (int i = 0; i < u.size(); ++i) u[i] = rng.normal();
  for (int i = 0; i < w.size(); ++i) w[i] = rng.normal();
  const Vector Jw = map.jvp(p.data(), w);
  const Vector Jtu = map.vjp(p.data(), u);
  const double lhs = u.dot(Jw);
  const double rhs = Jtu.dot(w);
  const double adjoint_gap = std::abs(lhs - rhs) /
                             (1e-30 + u.norm() * Jw.norm() + w.norm() * Jtu.norm());
  suite.add_bound("adjoint_identity_" + tag, adjoint_gap, 1e-6);

  const Vector vjp_fd = Jfd.transpose() * u;
  double worst_v = 0.0;
  double va = 0.0, vf = 0.0;
  for (int i = 0; i < Jtu.size(); ++i) {
    const double e = rel_err(Jtu[i], vjp_fd[i]);
    if (e > worst_v) {
      worst_v = e;
      va = Jtu[i];
      vf = vjp_fd[i];
    }
  }
  suite.add("vjp_vs_dense_fd_" + tag, va, vf, 1e-4);

  // Gradient of the photometric half-loss via vjp(r) against FD of the scalar.
  const Vector r = map.residual(p.data());
  const Vector g = map.vjp(p.data(), r);
  const Vector g_fd = oracles::fd_grad(
      [&](const Vector& x) { return 0.5 * map.residual(x).squaredNorm(); }, p.data());
  double worst_g = 0.0;
  double ga = 0.0, gf = 0.0;
  for (int i = 0; i < g.size(); ++i) {
    const double e = rel_err(g[i], g_fd[i]);
    if (e > worst_g) {
      worst_g = e;
      ga = g[i];
      gf = g_fd[i];
    }
  }
  suite.add("loss_grad_vs_fd_" + tag, ga, gf, 1e-4);
}

struct QuadInstance {
  oracles::QuadraticTask task;
  Vector p0, lam, target;
};

QuadInstance random_quadratic(std::uint64_t seed, bool conditioned = false) {
  Rng rng(seed);
  const int n = 6 + static_cast<int>(rng.engine() % 8);
  const int m = n + 4 + static_cast<int>(rng.engine() % 8);
  Eigen::MatrixXd A(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) A(i, j) = rng.normal(0.0, 1.0 / std::sqrt(m));
  if (conditioned) {
    // Rescale to singular values in [0.7, 1.5] so A^T A stays O(1)-conditioned.
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Vector s(n);
    for (int i = 0; i < n; ++i) s[i] = rng.uniform(0.7, 1.5);
    A = svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
  }
  Vector b(m), p0(n), lam(n), target(n);
  for (int i = 0; i < m; ++i) b[i] = rng.normal();
  for (int i = 0; i < n; ++i) {
    p0[i] = rng.normal();
    lam[i] = rng.uniform(0.05, 2.0);
    target[i] = rng.normal();
  }
  return {oracles::QuadraticTask(std::move(A), std::move(b)), std::move(p0), std::move(lam),
          std::move(target)};
}

void quadratic_checks(Suite& suite, std::uint64_t seed, int count) {
  double worst_init = 0.0, worst_lam = 0.0;
  double wi_a = 0.0, wi_o = 0.0, wl_a = 0.0, wl_o = 0.0;
  for (int t = 0; t < count; ++t) {
    const QuadInstance q = random_quadratic(mix_seed(seed, 0x9a3d, t));
    const Vector p_star = quadratic_closed_form(q.task, q.p0, q.lam);
    const Vector outer_grad = p_star - q.target;

    Eigen::MatrixXd M = q.task.gram;
    M.diagonal() += q.lam;
    const Vector v_dense = M.ldlt().solve(outer_grad);
    const Vector gi_dense = q.lam.cwiseProduct(v_dense);
    const Vector gl_dense = -v_dense.cwiseProduct(p_star - q.p0);

    const LinearResidual map = q.task.map();
    PcgConfig pcg;
    pcg.tol = 1e-12;
    pcg.max_iters = 4 * static_cast<int>(q.p0.size()) + 20;
    const BackwardResult bw =
        implicit_backward(map, p_star, q.p0, RegWeights(q.lam),
                          Vector::Ones(q.p0.size()), outer_grad, pcg, 1e-6);
    for (int i = 0; i < gi_dense.size(); ++i) {
      const double ei = rel_err(bw.grad_init[i], gi_dense[i]);
      if (ei > worst_init) {
        worst_init = ei;
        wi_a = bw.grad_init[i];
        wi_o = gi_dense[i];
      }
      const double el = rel_err(bw.grad_lam[i], gl_dense[i]);
      if (el > worst_lam) {
        worst_lam = el;
        wl_a = bw.grad_lam[i];
        wl_o = gl_dense[i];
      }
    }
  }
  suite.add("quad_grad_init_vs_closed_form", wi_a, wi_o, 1e-6);
  suite.add("quad_grad_lam_vs_closed_form", wl_a, wl_o, 1e-6);
}

void lambda_extreme_checks(Suite& suite, std::uint64_t seed, bool quadratic_only) {
  // Weak prior on an O(1)-conditioned quadratic: the gradient vanishes.
  {
    const QuadInstance q = random_quadratic(mix_seed(seed, 0x77aa), /*conditioned=*/true);
    const Vector lam_min = Vector::Constant(q.p0.size(), kLambdaMin);
    const Vector p_star = quadratic_closed_form(q.task, q.p0, lam_min);
    const Vector outer_grad = p_star - q.target;
    const LinearResidual map = q.task.map();
    PcgConfig pcg;
    pcg.tol = 1e-12;
    pcg.max_iters = 400;
    const BackwardResult bw = implicit_backward(map, p_star, q.p0, RegWeights(lam_min),
                                                Vector::Ones(q.p0.size()), outer_grad, pcg,
                                                1e-6);
    suite.add_bound("weak_prior_grad_ratio", bw.grad_init.norm() / outer_grad.norm(), 1e-3);
  }
  if (quadratic_only) {
    const QuadInstance q = random_quadratic(mix_seed(seed, 0x77ab));
    const Vector lam_big = Vector::Constant(q.p0.size(), 1e6);
    const Vector p_star = quadratic_closed_form(q.task, q.p0, lam_big);
    const Vector outer_grad = p_star - q.target;
    const LinearResidual map = q.task.map();
    const BackwardResult bw = implicit_backward(map, p_star, q.p0, RegWeights(lam_big),
                                                Vector::Ones(q.p0.size()), outer_grad,
                                                PcgConfig{}, 1e-3);
    suite.add_bound("strong_prior_grad_gap",
                    (bw.grad_init - outer_grad).norm() / outer_grad.norm(), 1e-3);
    return;
  }
  // Strong prior on a splatting task: the gradient passes straight through.
  const TaskInstance task = gradcheck_task(mix_seed(seed, 0x77ac), 4, 2, 2);
  const ParamVector p = perturbed(task.gt_params, 1.0, mix_seed(seed, 0x77ad));
  Rng rng(mix_seed(seed, 0x77ae));
  Vector outer_grad(p.size());
  for (int i = 0; i < outer_grad.size(); ++i) outer_grad[i] = rng.normal();
  const BackwardResult bw = scalar_backward(p, p, 1e6, task.context, outer_grad, PcgConfig{},
                                            /*stationarity_tol=*/1e9);
  suite.add_bound("strong_prior_grad_gap",
                  (bw.grad_init - outer_grad).norm() / outer_grad.norm(), 1e-3);
}

void implicit_vs_unrolled_check(Suite& suite, std::uint64_t seed) {
  // Moderate perturbation keeps residuals small at the optimum, where the
  // Gauss-Newton Hessian model is accurate.
  const TaskInstance task = gradcheck_task(mix_seed(seed, 0x15fa), 6, 2, 2);
  const ParamVector p0 = perturbed(task.gt_params, 0.5, mix_seed(seed, 0x15fb));
  const SplatResidual map = make_splat_residual(p0, task.context);
  const RegWeights lam_eff = RegWeights::constant(p0.size(), 1.0);
  InnerConfig cfg;
  cfg.steps = 400;
  cfg.stationarity_tol = 1e-5;
  const Vector rates = Vector::Constant(p0.size(), 0.2);

  const TtoResult tto = run_tto(map, p0.data(), lam_eff, cfg, rates);
  suite.add_bound("unrolled_stationarity", tto.report.final_stationarity, 1e-5);
  suite.add_bound("unrolled_rejected_steps", tto.report.rejected_steps, 0.5);

  const ParamVector p_star{tto.p_star};
  const LossAndGrad outer = outer_loss(p_star, task.novel);
  PcgConfig pcg;
  pcg.tol = 1e-10;
  const BackwardResult bw = implicit_backward(map, tto.p_star, p0.data(), lam_eff,
                                              Vector::Ones(p0.size()), outer.grad, pcg, 1e-4);
  const oracles::OuterObjective obj{
      [&](const Vector& x) {
        return iftsplat::residual(ParamVector(x), task.novel).data.squaredNorm();
      },
      [&](const Vector& x) { return outer_loss(ParamVector(x), task.novel).grad; }};
  const Vector unrolled = oracles::unrolled_grad_fd(map, p0.data(), lam_eff, cfg, rates, obj);

  const double cosine =
      bw.grad_init.dot(unrolled) / (bw.grad_init.norm() * unrolled.norm() + 1e-300);
  suite.add_bound("implicit_vs_unrolled_cos_gap", 1.0 - cosine, 0.01);
  suite.add_bound("implicit_vs_unrolled_mag_gap",
                  std::abs(bw.grad_init.norm() - unrolled.norm()) / unrolled.norm(), 0.05);
}

void lam_fd_check(Suite& suite, std::uint64_t seed) {
  const QuadInstance q = random_quadratic(mix_seed(seed, 0x4afd));
  const Vector p_star = quadratic_closed_form(q.task, q.p0, q.lam);
  const Vector outer_grad = p_star - q.target;
  const LinearResidual map = q.task.map();
  PcgConfig pcg;
  pcg.tol = 1e-12;
  pcg.max_iters = 400;
  const BackwardResult bw = implicit_backward(map, p_star, q.p0, RegWeights(q.lam),
                                              Vector::Ones(q.p0.size()), outer_grad, pcg,
                                              1e-6);
  double worst = 0.0, wa = 0.0, wo = 0.0;
  const int check_entries = std::min<int>(4, static_cast<int>(q.lam.size()));
  for (int k = 0; k < check_entries; ++k) {
    const double h = 1e-4;
    auto outer_at = [&](double lam_k) {
      Vector lam = q.lam;
      lam[k] = lam_k;
      const Vector ps = quadratic_closed_form(q.task, q.p0, lam);
      return 0.5 * (ps - q.target).squaredNorm();
    };
    const double fd = (outer_at(q.lam[k] + h) - outer_at(q.lam[k] - h)) / (2.0 * h);
    const double e = rel_err(bw.grad_lam[k], fd);
    if (e > worst) {
      worst = e;
      wa = bw.grad_lam[k];
      wo = fd;
    }
  }
  suite.add("lam_grad_vs_fd_quadratic", wa, wo, 0.05);
}

double untrusted_rate_with_short_tto(std::uint64_t seed, int tasks) {
  int untrusted = 0;
  for (int t = 0; t < tasks; ++t) {
    const TaskInstance task = gradcheck_task(mix_seed(seed, 0xb5, t), 4, 2, 2);
    const ParamVector p0 = perturbed(task.gt_params, 1.0, mix_seed(seed, 0xb6, t));
    InnerConfig cfg;
    cfg.steps = 2;
    const RegWeights lam = RegWeights::constant(p0.size(), 1.0);
    const TtoResult tto = run_tto(p0, lam, task.context, cfg);
    const LossAndGrad outer = outer_loss(ParamVector(tto.p_star), task.novel);
    const BackwardResult bw =
        implicit_backward(ParamVector(tto.p_star), p0, lam, DiagScaler::unit(p0.size()),
                          task.context, outer.grad, PcgConfig{}, 1.0, 1e-3);
    if (!bw.trusted) ++untrusted;
  }
  return static_cast<double>(untrusted) / tasks;
}

}  // namespace

GradcheckResult run_gradcheck(const GradcheckOptions& opts) {
  Suite suite;
  if (!opts.quadratic_only)
    for (int t = 0; t < opts.splat_tasks; ++t) splat_checks(suite, opts.seed, t);
  quadratic_checks(suite, opts.seed, opts.quad_tasks);
  lambda_extreme_checks(suite, opts.seed, opts.quadratic_only);
  lam_fd_check(suite, opts.seed);
  if (!opts.quadratic_only) implicit_vs_unrolled_check(suite, opts.seed);

  GradcheckResult out;
  if (opts.break_stationarity) {
    out.untrusted_rate = untrusted_rate_with_short_tto(opts.seed, 3);
    CheckRow row;
    row.name = "untrusted_rate_with_2_steps";
    row.analytic = out.untrusted_rate;
    row.oracle = 0.0;
    row.abs_err = out.untrusted_rate;
    row.rel_err = out.untrusted_rate;
    row.pass = out.untrusted_rate > 0.0;
    suite.all_pass = suite.all_pass && row.pass;
    suite.rows.push_back(row);
  }
  out.rows = std::move(suite.rows);
  out.all_pass = suite.all_pass;
  return out;
}

std::string check_rows_csv(const std::vector<CheckRow>& rows) {
  std::string out = "name,analytic,oracle,abs_err,rel_err\n";
  char line[256];
  for (const CheckRow& r : rows) {
    std::snprintf(line, sizeof(line), "%s,%.17g,%.17g,%.17g,%.17g\n", r.name.c_str(),
                  r.analytic, r.oracle, r.abs_err, r.rel_err);
    out += line;
  }
  return out;
}

}  // namespace iftsplat
