#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "iftsplat/harness.hpp"
#include "iftsplat/meta.hpp"
#include "iftsplat/oracles.hpp"

using namespace iftsplat;
using oracles::QuadraticTask;

TEST_CASE("fd_grad is exact on quadratics, constants and bilinear forms") {
  Vector x(2);
  x << 1.0, 2.0;
  const Vector g = oracles::fd_grad([](const Vector& v) { return 0.5 * v.squaredNorm(); }, x);
  CHECK(std::abs(g[0] - 1.0) < 1e-8);
  CHECK(std::abs(g[1] - 2.0) < 1e-8);

  const Vector gc = oracles::fd_grad([](const Vector&) { return 3.5; }, x);
  CHECK(gc.lpNorm<Eigen::Infinity>() == 0.0);

  Vector y(2);
  y << 3.0, 4.0;
  const Vector gb = oracles::fd_grad([](const Vector& v) { return v[0] * v[1]; }, y);
  CHECK(std::abs(gb[0] - 4.0) < 1e-8);
  CHECK(std::abs(gb[1] - 3.0) < 1e-8);
}

TEST_CASE("fd_grad of a quadratic is step-size independent across [1e-6, 1e-3]") {
  Rng rng(5);
  Vector x(6);
  for (int i = 0; i < 6; ++i) x[i] = rng.normal();
  for (double h : {1e-6, 1e-5, 1e-4, 1e-3}) {
    const Vector g =
        oracles::fd_grad([](const Vector& v) { return 0.5 * v.squaredNorm(); }, x, h);
    CHECK((g - x).norm() / x.norm() < 1e-8);
  }
}

TEST_CASE("fd_grad reports non-finite evaluations") {
  Vector x(1);
  x << 0.0;  // log(x - h) is NaN
  CHECK_THROWS_AS(oracles::fd_grad([](const Vector& v) { return std::log(v[0]); }, x),
                  NonFiniteEval);
}

TEST_CASE("dense_jacobian enforces the desk-scale guard") {
  Rng rng(7);
  Eigen::MatrixXd A(120, 100);
  for (int i = 0; i < A.rows(); ++i)
    for (int j = 0; j < A.cols(); ++j) A(i, j) = rng.normal();
  const QuadraticTask task(A, Vector::Zero(120));
  const LinearResidual map = task.map();
  CHECK_THROWS_AS(oracles::dense_jacobian(map, Vector::Zero(100)), TooLarge);
  CHECK_NOTHROW(oracles::dense_jacobian(map, Vector::Zero(100), 1e-5, 20000));
}

TEST_CASE("dense_jacobian columns satisfy the adjoint identity") {
  const TaskInstance task = gradcheck_task(11, 4, 2, 2);
  const ParamVector p = perturbed(task.gt_params, 1.0, 13);
  const Eigen::MatrixXd J = oracles::dense_jacobian(p, task.context);
  Rng rng(17);
  Vector u(J.rows()), w(J.cols());
  for (int i = 0; i < u.size(); ++i) u[i] = rng.normal();
  for (int i = 0; i < w.size(); ++i) w[i] = rng.normal();
  const double lhs = u.dot(J * w);
  const double rhs = (J.transpose() * u).dot(w);
  CHECK(std::abs(lhs - rhs) <= 1e-4 * (std::abs(lhs) + std::abs(rhs) + 1.0));
}

TEST_CASE("quadratic_closed_form handles identity, strong-prior and no-data cases") {
  const int n = 4;
  Rng rng(19);
  Vector p0(n);
  for (int i = 0; i < n; ++i) p0[i] = rng.normal();

  const QuadraticTask ident(Eigen::MatrixXd::Identity(n, n), Vector::Zero(n));
  const Vector half = quadratic_closed_form(ident, p0, Vector::Ones(n));
  CHECK((half - 0.5 * p0).lpNorm<Eigen::Infinity>() < 1e-12);

  const Vector pinned = quadratic_closed_form(ident, p0, Vector::Constant(n, 1e12));
  CHECK((pinned - p0).lpNorm<Eigen::Infinity>() < 1e-9);

  const QuadraticTask nodata(Eigen::MatrixXd::Zero(2, n), Vector::Zero(2));
  const Vector same = quadratic_closed_form(nodata, p0, Vector::Ones(n));
  CHECK((same - p0).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("quadratic_closed_form satisfies the stationarity equation to 1e-10") {
  for (int trial = 0; trial < 10; ++trial) {
    Rng rng(mix_seed(23, trial));
    const int n = 6, m = 9;
    Eigen::MatrixXd A(m, n);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) A(i, j) = rng.normal();
    Vector b(m), p0(n), lam(n);
    for (int i = 0; i < m; ++i) b[i] = rng.normal();
    for (int i = 0; i < n; ++i) {
      p0[i] = rng.normal();
      lam[i] = rng.uniform(0.05, 2.0);
    }
    const QuadraticTask task(A, b);
    const Vector p_star = quadratic_closed_form(task, p0, lam);
    const Vector resid =
        A.transpose() * (A * p_star - b) + lam.cwiseProduct(p_star - p0);
    CHECK(resid.lpNorm<Eigen::Infinity>() < 1e-10);
  }
}

TEST_CASE("quadratic_closed_form rejects singular systems") {
  const int n = 3;
  const QuadraticTask degenerate(Eigen::MatrixXd::Zero(2, n), Vector::Zero(2));
  CHECK_THROWS_AS(quadratic_closed_form(degenerate, Vector::Zero(n), Vector::Zero(n)),
                  SingularSystem);
}

TEST_CASE("unrolled gradient with zero steps is the outer gradient at p0") {
  const TaskInstance task = gradcheck_task(29, 4, 2, 2);
  const ParamVector p0 = perturbed(task.gt_params, 0.5, 31);
  const SplatResidual map = make_splat_residual(p0, task.context);
  InnerConfig cfg;
  cfg.steps = 0;
  const oracles::OuterObjective obj{
      [&](const Vector& x) { return residual(ParamVector(x), task.novel).data.squaredNorm(); },
      [&](const Vector& x) { return outer_loss(ParamVector(x), task.novel).grad; }};
  const Vector rates = Vector::Constant(p0.size(), 0.2);
  const Vector fd = oracles::unrolled_grad_fd(map, p0.data(),
                                              RegWeights::constant(p0.size(), 1.0), cfg,
                                              rates, obj);
  const Vector direct = obj.grad(p0.data());
  CHECK((fd - direct).norm() / direct.norm() < 1e-5);
}

TEST_CASE("unrolled quadratic gradient converges to the implicit formula") {
  Rng rng(37);
  const int n = 6, m = 10;
  Eigen::MatrixXd A(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) A(i, j) = rng.normal();
  Vector b(m), p0(n), target(n);
  for (int i = 0; i < m; ++i) b[i] = rng.normal();
  for (int i = 0; i < n; ++i) {
    p0[i] = rng.normal();
    target[i] = rng.normal();
  }
  const QuadraticTask task(A, b);
  const Vector lam = Vector::Constant(n, 1.0);

  const oracles::OuterObjective obj{
      [&](const Vector& x) { return 0.5 * (x - target).squaredNorm(); },
      [&](const Vector& x) { return Vector(x - target); }};
  InnerConfig cfg;
  cfg.steps = 500;
  const Vector rates = Vector::Constant(n, 0.05);
  const Vector unrolled =
      oracles::unrolled_grad_dual(task, p0, RegWeights(lam), cfg, rates, obj);

  // Implicit formula at the closed-form optimum: lam . (A^T A + lam)^{-1} g.
  const Vector p_star = quadratic_closed_form(task, p0, lam);
  Eigen::MatrixXd M = task.gram;
  M.diagonal() += lam;
  const Vector implicit = lam.cwiseProduct(M.ldlt().solve(Vector(p_star - target)));
  CHECK((unrolled - implicit).norm() / implicit.norm() < 0.01);
}

TEST_CASE("finite-difference and dual-number unrolled modes agree") {
  Rng rng(41);
  const int n = 5, m = 8;
  Eigen::MatrixXd A(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) A(i, j) = rng.normal();
  Vector b(m), p0(n), target(n);
  for (int i = 0; i < m; ++i) b[i] = rng.normal();
  for (int i = 0; i < n; ++i) {
    p0[i] = rng.normal();
    target[i] = rng.normal();
  }
  const QuadraticTask task(A, b);
  const LinearResidual map = task.map();
  const RegWeights lam = RegWeights::constant(n, 0.5);
  const oracles::OuterObjective obj{
      [&](const Vector& x) { return 0.5 * (x - target).squaredNorm(); },
      [&](const Vector& x) { return Vector(x - target); }};
  InnerConfig cfg;
  cfg.steps = 60;  // deliberately short: both modes see the same finite trajectory
  const Vector rates = Vector::Constant(n, 0.05);
  const Vector fd = oracles::unrolled_grad_fd(map, p0, lam, cfg, rates, obj);
  const Vector dual = oracles::unrolled_grad_dual(task, p0, lam, cfg, rates, obj);
  CHECK((fd - dual).norm() / dual.norm() < 1e-3);
}

TEST_CASE("unrolled gradients enforce the parameter-count guard") {
  const QuadraticTask task(Eigen::MatrixXd::Identity(4, 4), Vector::Zero(4));
  const oracles::OuterObjective obj{[](const Vector& x) { return x.squaredNorm(); },
                                    [](const Vector& x) { return Vector(2.0 * x); }};
  InnerConfig cfg;
  cfg.steps = 1;
  CHECK_THROWS_AS(oracles::unrolled_grad_dual(task, Vector::Zero(4),
                                              RegWeights::constant(4, 1.0), cfg,
                                              Vector::Constant(4, 0.1), obj, /*max_params=*/2),
                  TooLarge);
}
