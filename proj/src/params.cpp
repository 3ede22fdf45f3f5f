#include "iftsplat/params.hpp"

#include <cmath>

#include "json.hpp"

namespace iftsplat {

ParamVector pack(const std::vector<GaussianAttrib>& gaussians) {
  if (gaussians.empty()) throw EmptyScene("pack: empty Gaussian list");
  Vector data(kStride * gaussians.size());
  for (size_t i = 0; i < gaussians.size(); ++i) {
    const GaussianAttrib& g = gaussians[i];
    const double qn2 =
        g.rot.w * g.rot.w + g.rot.x * g.rot.x + g.rot.y * g.rot.y + g.rot.z * g.rot.z;
    if (!(qn2 > 0.0)) throw DegenerateRotation("pack: zero-norm quaternion");
    double* d = data.data() + kStride * i;
    d[0] = g.mean.x;
    d[1] = g.mean.y;
    d[2] = g.mean.z;
    d[3] = g.log_scale.x;
    d[4] = g.log_scale.y;
    d[5] = g.log_scale.z;
    d[6] = g.rot.w;
    d[7] = g.rot.x;
    d[8] = g.rot.y;
    d[9] = g.rot.z;
    d[10] = g.opacity_logit;
    d[11] = g.color.x;
    d[12] = g.color.y;
    d[13] = g.color.z;
  }
  return ParamVector(std::move(data));
}

std::vector<GaussianAttrib> unpack(const ParamVector& p) {
  std::vector<GaussianAttrib> out(p.num_gaussians());
  for (int i = 0; i < p.num_gaussians(); ++i) {
    const double* d = p.raw() + kStride * i;
    GaussianAttrib& g = out[i];
    g.mean = {d[0], d[1], d[2]};
    g.log_scale = {d[3], d[4], d[5]};
    g.rot = {d[6], d[7], d[8], d[9]};
    g.opacity_logit = d[10];
    g.color = {d[11], d[12], d[13]};
  }
  return out;
}

RenderableGaussian activate_one(const double* d) {
  RenderableGaussian r;
  r.mean = {d[0], d[1], d[2]};
  r.scale = {std::exp(d[3]), std::exp(d[4]), std::exp(d[5])};
  const double qn2 = d[6] * d[6] + d[7] * d[7] + d[8] * d[8] + d[9] * d[9];
  if (!(qn2 > 0.0)) throw DegenerateRotation("activate: zero-norm quaternion");
  const double qi = 1.0 / std::sqrt(qn2);
  r.rot = {d[6] * qi, d[7] * qi, d[8] * qi, d[9] * qi};
  r.opacity = sigmoid(d[10]);
  r.color = {sigmoid(d[11]), sigmoid(d[12]), sigmoid(d[13])};
  return r;
}

std::vector<RenderableGaussian> activate(const ParamVector& p) {
  std::vector<RenderableGaussian> out(p.num_gaussians());
  for (int i = 0; i < p.num_gaussians(); ++i) out[i] = activate_one(p.raw() + kStride * i);
  return out;
}

std::string to_json(const ParamVector& p) {
  nlohmann::json j;
  j["num_gaussians"] = p.num_gaussians();
  j["layout_version"] = kLayoutVersion;
  j["data"] = std::vector<double>(p.raw(), p.raw() + p.size());
  return j.dump();
}

ParamVector param_vector_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  if (!j.contains("layout_version") || j["layout_version"].get<int>() != kLayoutVersion)
    throw IoError("parameter JSON: unsupported layout_version");
  const auto values = j["data"].get<std::vector<double>>();
  Vector data(values.size());
  for (size_t i = 0; i < values.size(); ++i) data[i] = values[i];
  ParamVector p(std::move(data));
  if (j.contains("num_gaussians") && j["num_gaussians"].get<int>() != p.num_gaussians())
    throw IoError("parameter JSON: num_gaussians does not match data length");
  return p;
}

}  // namespace iftsplat
