// Timing comparison of the serial reference kernels against the OpenMP
// paths, over a few scene sizes. Both paths share one reduction order, so
// outputs are also checked for bitwise equality here.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>

#include "iftsplat/harness.hpp"
#include "iftsplat/render/renderer.hpp"

using namespace iftsplat;

namespace {

double time_ms(const std::function<void()>& fn, int repeats) {
  fn();  // warmup
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < repeats; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / repeats;
}

bool bitwise_equal(const Vector& a, const Vector& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

int main(int argc, char** argv) {
  int repeats = 5;
  if (argc > 1) repeats = std::atoi(argv[1]);

  std::printf("threads available: %d\n", thread_budget());
  std::printf("%-10s %-8s %-12s %-12s %-12s %-8s\n", "kernel", "scene", "serial(ms)",
              "openmp(ms)", "speedup", "bitwise");

  for (const auto& [size, gaussians] : {std::pair{32, 16}, {64, 32}, {96, 64}}) {
    TaskSpec spec;
    spec.width = spec.height = size;
    spec.num_gaussians = gaussians;
    spec.seed = 7;
    const TaskInstance task = gen_task(spec);
    const ParamVector p = perturbed(task.gt_params, 1.0, 11);
    char scene[32];
    std::snprintf(scene, sizeof(scene), "%dpx/%dg", size, gaussians);

    const ResidualVector r_serial = residual(p, task.context, Exec::serial);
    const ResidualVector r_par = residual(p, task.context, Exec::parallel);
    const double t_render_s =
        time_ms([&] { (void)residual(p, task.context, Exec::serial); }, repeats);
    const double t_render_p =
        time_ms([&] { (void)residual(p, task.context, Exec::parallel); }, repeats);
    std::printf("%-10s %-8s %-12.3f %-12.3f %-12.2f %-8s\n", "render", scene, t_render_s,
                t_render_p, t_render_s / t_render_p,
                bitwise_equal(r_serial.data, r_par.data) ? "yes" : "NO");

    Vector w(p.size());
    for (int i = 0; i < w.size(); ++i) w[i] = std::sin(0.1 * i);
    const Vector j_serial = jvp(p, task.context, w, Exec::serial).data;
    const Vector j_par = jvp(p, task.context, w, Exec::parallel).data;
    const double t_jvp_s = time_ms([&] { (void)jvp(p, task.context, w, Exec::serial); }, repeats);
    const double t_jvp_p =
        time_ms([&] { (void)jvp(p, task.context, w, Exec::parallel); }, repeats);
    std::printf("%-10s %-8s %-12.3f %-12.3f %-12.2f %-8s\n", "jvp", scene, t_jvp_s, t_jvp_p,
                t_jvp_s / t_jvp_p, bitwise_equal(j_serial, j_par) ? "yes" : "NO");

    const Vector v_serial = vjp(p, task.context, r_serial.data, Exec::serial);
    const Vector v_par = vjp(p, task.context, r_serial.data, Exec::parallel);
    const double t_vjp_s =
        time_ms([&] { (void)vjp(p, task.context, r_serial.data, Exec::serial); }, repeats);
    const double t_vjp_p =
        time_ms([&] { (void)vjp(p, task.context, r_serial.data, Exec::parallel); }, repeats);
    std::printf("%-10s %-8s %-12.3f %-12.3f %-12.2f %-8s\n", "vjp", scene, t_vjp_s, t_vjp_p,
                t_vjp_s / t_vjp_p, bitwise_equal(v_serial, v_par) ? "yes" : "NO");
  }
  return 0;
}
