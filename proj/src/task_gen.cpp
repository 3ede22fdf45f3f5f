#include <algorithm>
#include <cmath>
#include <cstdio>

#include "iftsplat/harness.hpp"

namespace iftsplat {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::uint64_t z = a * 0x9e3779b97f4a7c15ULL + b * 0xbf58476d1ce4e5b9ULL +
                    c * 0x94d049bb133111ebULL + 0x2545f4914f6cdd1dULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void TaskSpec::validate() const {
  if (num_gaussians < 1 || num_context < 1 || num_novel < 1)
    throw ShapeError("task spec: counts must be >= 1");
  if (width < 4 || height < 4) throw ShapeError("task spec: image size must be >= 4x4");
  if (ring_radius <= 0.0) throw ShapeError("task spec: ring radius must be positive");
}

ParamVector base_scene(const TaskSpec& spec) {
  Rng rng(mix_seed(spec.family_seed, 0x5ce17eULL));
  std::vector<GaussianAttrib> gs(spec.num_gaussians);
  for (GaussianAttrib& g : gs) {
    g.mean = {rng.uniform(-0.45, 0.45), rng.uniform(-0.45, 0.45), rng.uniform(-0.45, 0.45)};
    const double s = rng.uniform(0.08, 0.16);
    g.log_scale = {std::log(s * rng.uniform(0.8, 1.25)), std::log(s * rng.uniform(0.8, 1.25)),
                   std::log(s * rng.uniform(0.8, 1.25))};
    Quat<double> q{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    const double qn = std::sqrt(q.w * q.w + q.x * q.x + q.y * q.y + q.z * q.z);
    const double flip = q.w < 0.0 ? -1.0 : 1.0;
    g.rot = {flip * q.w / qn, flip * q.x / qn, flip * q.y / qn, flip * q.z / qn};
    g.opacity_logit = logit(rng.uniform(0.55, 0.9));
    g.color = {logit(rng.uniform(0.15, 0.85)), logit(rng.uniform(0.15, 0.85)),
               logit(rng.uniform(0.15, 0.85))};
  }
  return pack(gs);
}

static ParamVector jitter_scene(const ParamVector& base, const TaskSpec& spec, Rng& rng) {
  Vector data = base.data();
  for (int i = 0; i < base.num_gaussians(); ++i) {
    double* d = data.data() + kStride * i;
    for (int k = 0; k < 3; ++k) d[kMeanOff + k] += rng.normal(0.0, spec.jitter_mean);
    for (int k = 0; k < 3; ++k) d[kLogScaleOff + k] += rng.normal(0.0, spec.jitter_log_scale);
    for (int k = 0; k < 4; ++k) d[kRotOff + k] += rng.normal(0.0, spec.jitter_rot);
    d[kOpacityOff] += rng.normal(0.0, spec.jitter_opacity);
    for (int k = 0; k < 3; ++k) d[kColorOff + k] += rng.normal(0.0, spec.jitter_color);
  }
  return ParamVector(std::move(data));
}

TaskInstance render_task(const ParamVector& gt, const std::vector<Camera>& context_cams,
                         const std::vector<Camera>& novel_cams, double exposure_corruption,
                         int corrupt_view, const std::string& id) {
  TaskInstance task;
  task.gt_params = gt;
  task.id = id;
  for (size_t i = 0; i < context_cams.size(); ++i) {
    ImageBuffer img = render(gt, context_cams[i]);
    if (exposure_corruption != 0.0 && static_cast<int>(i) == corrupt_view)
      for (double& v : img.data) v = std::clamp(v + exposure_corruption, 0.0, 1.0);
    task.context.views.push_back({context_cams[i], std::move(img)});
  }
  for (const Camera& cam : novel_cams)
    task.novel.views.push_back({cam, render(gt, cam)});
  return task;
}

TaskInstance gen_task(const TaskSpec& spec) {
  spec.validate();
  const ParamVector base = base_scene(spec);
  Rng rng(mix_seed(spec.family_seed, spec.seed, 0x7a55ULL));
  const ParamVector gt = jitter_scene(base, spec, rng);

  const int total_views = spec.num_context + spec.num_novel;
  const double focal = 1.0 * spec.width;
  std::vector<Camera> ctx_cams, novel_cams;
  for (int v = 0; v < total_views; ++v) {
    const double angle = 2.0 * M_PI * v / total_views + rng.normal(0.0, spec.camera_jitter);
    const double radius = spec.ring_radius * (1.0 + rng.normal(0.0, 0.02));
    const double height = rng.normal(0.0, 0.15);
    const Vec3<double> eye{radius * std::cos(angle), radius * std::sin(angle), height};
    const Camera cam =
        look_at(eye, Vec3<double>{0.0, 0.0, 0.0}, focal, focal, spec.width, spec.height);
    // Interleave: slot parity picks context first, until a side fills up.
    if ((v % 2 == 0 && static_cast<int>(ctx_cams.size()) < spec.num_context) ||
        static_cast<int>(novel_cams.size()) >= spec.num_novel)
      ctx_cams.push_back(cam);
    else
      novel_cams.push_back(cam);
  }
  const int corrupt_view =
      spec.exposure_corruption != 0.0
          ? static_cast<int>(rng.engine() % static_cast<std::uint64_t>(spec.num_context))
          : 0;

  char id[64];
  std::snprintf(id, sizeof(id), "task_f%llu_s%llu",
                static_cast<unsigned long long>(spec.family_seed),
                static_cast<unsigned long long>(spec.seed));
  return render_task(gt, ctx_cams, novel_cams, spec.exposure_corruption, corrupt_view, id);
}

}  // namespace iftsplat
