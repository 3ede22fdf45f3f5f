#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "iftsplat/errors.hpp"
#include "iftsplat/smallmath.hpp"

namespace iftsplat {

using Vector = Eigen::VectorXd;

/// Flattened parameter layout, per Gaussian:
///   [mean(3), log_scale(3), rot(4, wxyz), opacity_logit(1), color_pre(3)]
inline constexpr int kStride = 14;
inline constexpr int kMeanOff = 0;
inline constexpr int kLogScaleOff = 3;
inline constexpr int kRotOff = 6;
inline constexpr int kOpacityOff = 10;
inline constexpr int kColorOff = 11;

/// Floor for regularization weights; keeps J^T J + diag(lambda) strictly
/// positive-definite.
inline constexpr double kLambdaMin = 1e-4;

inline constexpr int kLayoutVersion = 1;

/// One Gaussian in unconstrained optimization space.
struct GaussianAttrib {
  Vec3<double> mean;
  Vec3<double> log_scale;
  Quat<double> rot;  // unnormalized, norm must be > 0
  double opacity_logit = 0.0;
  Vec3<double> color;  // pre-activation
};

/// One Gaussian with activations applied, ready to splat.
struct RenderableGaussian {
  Vec3<double> mean;
  Vec3<double> scale;    // > 0
  Quat<double> rot;      // unit
  double opacity = 0.0;  // in (0,1)
  Vec3<double> color;    // in (0,1)
};

/// Flattened unconstrained parameters for N Gaussians.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(Vector data) : data_(std::move(data)) {
    if (data_.size() % kStride != 0)
      throw ShapeError("ParamVector length must be a multiple of 14");
  }
  static ParamVector zeros(int num_gaussians) {
    return ParamVector(Vector::Zero(kStride * num_gaussians));
  }

  int num_gaussians() const { return static_cast<int>(data_.size()) / kStride; }
  int size() const { return static_cast<int>(data_.size()); }
  const Vector& data() const { return data_; }
  Vector& data() { return data_; }
  const double* raw() const { return data_.data(); }

 private:
  Vector data_;
};

/// Nonnegative per-parameter regularization weights, floored at kLambdaMin.
class RegWeights {
 public:
  RegWeights() = default;
  explicit RegWeights(Vector data) : data_(std::move(data)) {
    data_ = data_.cwiseMax(kLambdaMin);
  }
  static RegWeights constant(int n, double value) {
    return RegWeights(Vector::Constant(n, value));
  }

  int size() const { return static_cast<int>(data_.size()); }
  const Vector& data() const { return data_; }

 private:
  Vector data_;
};

ParamVector pack(const std::vector<GaussianAttrib>& gaussians);
std::vector<GaussianAttrib> unpack(const ParamVector& p);

/// Maps unconstrained parameters to renderable attributes:
/// exp on scales, sigmoid on opacity and color, quaternion normalization.
std::vector<RenderableGaussian> activate(const ParamVector& p);
RenderableGaussian activate_one(const double* g);

/// JSON (de)serialization: {num_gaussians, layout_version, data}.
std::string to_json(const ParamVector& p);
ParamVector param_vector_from_json(const std::string& text);

}  // namespace iftsplat
