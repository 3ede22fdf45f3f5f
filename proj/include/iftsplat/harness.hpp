#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "iftsplat/meta.hpp"

namespace iftsplat {

/// Deterministic seed derivation (splitmix64 over the mixed inputs).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0);

struct Rng {
  std::mt19937_64 engine;
  explicit Rng(std::uint64_t seed) : engine(seed) {}
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine);
  }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine);
  }
};

/// Synthetic task family description. A family is a base scene (family_seed)
/// plus per-task jitter of the Gaussian attributes and cameras (seed), with
/// an optional exposure corruption applied to one context view.
struct TaskSpec {
  int num_gaussians = 16;
  int width = 32, height = 32;
  int num_context = 2;
  int num_novel = 3;
  double ring_radius = 2.5;
  double camera_jitter = 0.05;       // radians on the ring angle (and relative radius)
  double exposure_corruption = 0.0;  // additive offset on one context view
  std::uint64_t seed = 0;
  std::uint64_t family_seed = 0;
  // Per-task attribute jitter around the base scene.
  double jitter_mean = 0.04;
  double jitter_log_scale = 0.08;
  double jitter_rot = 0.03;
  double jitter_opacity = 0.25;
  double jitter_color = 0.35;

  void validate() const;
};

/// Base scene of the family (depends on family_seed only).
ParamVector base_scene(const TaskSpec& spec);

/// Deterministic task instance: base scene + seeded jitter, cameras on a
/// ring looking at the origin with context/novel slots interleaved, images
/// self-rendered from the ground truth; corruption touches context only.
TaskInstance gen_task(const TaskSpec& spec);

/// Builds a task from explicit ground truth and cameras (used by tests with
/// custom view geometry). Corruption, when nonzero, is applied to context
/// view `corrupt_view`.
TaskInstance render_task(const ParamVector& gt, const std::vector<Camera>& context_cams,
                         const std::vector<Camera>& novel_cams, double exposure_corruption,
                         int corrupt_view, const std::string& id);

/// Task file I/O. JSON per task; images as sidecar PPM files next to the
/// JSON by default, or embedded base64 with embed_images=true.
void write_task(const std::string& json_path, const TaskInstance& task, const TaskSpec& spec,
                bool embed_images);
TaskInstance read_task(const std::string& json_path);
std::vector<TaskInstance> read_task_dir(const std::string& dir);

std::string base64_encode(const std::vector<unsigned char>& bytes);
std::vector<unsigned char> base64_decode(const std::string& text);

/// Small, well-conditioned splatting task for gradient checks: every Gaussian
/// covers the whole image with a comfortable margin to the footprint and
/// alpha thresholds, and depths stay distinct per view, so finite
/// differences see a smooth function.
TaskInstance gradcheck_task(std::uint64_t seed, int size = 4, int num_views = 2,
                            int num_gaussians = 2);

/// Gaussian perturbation of a parameter vector (per-coordinate sigma scaled
/// by attribute group to stay in a well-behaved region).
ParamVector perturbed(const ParamVector& p, double sigma, std::uint64_t seed);

struct CheckRow {
  std::string name;
  double analytic = 0.0;
  double oracle = 0.0;
  double abs_err = 0.0;
  double rel_err = 0.0;
  bool pass = false;
};

struct GradcheckOptions {
  std::uint64_t seed = 0;
  bool quadratic_only = false;
  bool break_stationarity = false;  // cut TTO to 2 steps; expect untrusted flags
  int splat_tasks = 3;
  int quad_tasks = 10;
};

struct GradcheckResult {
  std::vector<CheckRow> rows;
  bool all_pass = true;
  double untrusted_rate = 0.0;
};

GradcheckResult run_gradcheck(const GradcheckOptions& opts);
std::string check_rows_csv(const std::vector<CheckRow>& rows);

/// CLI entry point (subcommands gen, gradcheck, tto, meta-train, eval,
/// report). Returns the process exit code.
int run_cli(const std::vector<std::string>& args);

}  // namespace iftsplat
