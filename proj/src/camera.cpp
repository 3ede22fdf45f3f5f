#include "iftsplat/camera.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace iftsplat {

void Camera::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw ShapeError("camera: fx, fy must be positive");
  if (width < 1 || height < 1) throw ShapeError("camera: width, height must be >= 1");
  // Orthonormality of the rotation block to 1e-9.
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double dij = 0.0;
      for (int k = 0; k < 3; ++k) dij += rot.m[i][k] * rot.m[j][k];
      const double expect = (i == j) ? 1.0 : 0.0;
      if (std::abs(dij - expect) > 1e-9) throw ShapeError("camera: rotation not orthonormal");
    }
}

Camera look_at(const Vec3<double>& eye, const Vec3<double>& target, double fx, double fy,
               int width, int height) {
  const Vec3<double> fwd = normalized(target - eye);
  const Vec3<double> up{0.0, 0.0, 1.0};
  const Vec3<double> xc = normalized(cross(fwd, up));
  const Vec3<double> yc = cross(fwd, xc);  // points world-down for level cameras
  Camera cam;
  cam.fx = fx;
  cam.fy = fy;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  cam.width = width;
  cam.height = height;
  cam.rot = Mat3<double>{{{xc.x, xc.y, xc.z}, {yc.x, yc.y, yc.z}, {fwd.x, fwd.y, fwd.z}}};
  cam.trans = mat_vec(cam.rot, eye) * -1.0;
  return cam;
}

void ImageBuffer::validate() const {
  if (static_cast<int>(data.size()) != width * height * 3)
    throw ShapeError("image: data length must be width*height*3");
  for (double v : data)
    if (!std::isfinite(v)) throw ShapeError("image: non-finite pixel value");
}

ContextSet concat(const ContextSet& a, const ContextSet& b) {
  ContextSet out = a;
  out.views.insert(out.views.end(), b.views.begin(), b.views.end());
  return out;
}

std::vector<unsigned char> ppm_bytes(const ImageBuffer& img) {
  char header[64];
  const int n = std::snprintf(header, sizeof(header), "P6\n%d %d\n255\n", img.width, img.height);
  std::vector<unsigned char> out(header, header + n);
  out.reserve(out.size() + img.value_count());
  for (double v : img.data) {
    const double c = std::clamp(v, 0.0, 1.0);
    out.push_back(static_cast<unsigned char>(std::lround(c * 255.0)));
  }
  return out;
}

ImageBuffer ppm_from_bytes(const std::vector<unsigned char>& bytes) {
  size_t pos = 0;
  auto token = [&]() -> std::string {
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    if (pos < bytes.size() && bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    }
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(bytes[pos++]);
    return t;
  };
  if (token() != "P6") throw IoError("ppm: expected P6 magic");
  ImageBuffer img;
  img.width = std::stoi(token());
  img.height = std::stoi(token());
  const int maxval = std::stoi(token());
  if (maxval != 255) throw IoError("ppm: only maxval 255 supported");
  ++pos;  // single whitespace after maxval
  const size_t need = static_cast<size_t>(img.width) * img.height * 3;
  if (bytes.size() - pos < need) throw IoError("ppm: truncated pixel data");
  img.data.resize(need);
  for (size_t i = 0; i < need; ++i) img.data[i] = bytes[pos + i] / 255.0;
  return img;
}

void write_ppm(const std::string& path, const ImageBuffer& img) {
  const std::vector<unsigned char> bytes = ppm_bytes(img);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for write: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

ImageBuffer read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for read: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
  return ppm_from_bytes(bytes);
}

double mse(const ImageBuffer& a, const ImageBuffer& b) {
  if (a.width != b.width || a.height != b.height)
    throw ShapeError("mse: image sizes differ");
  double acc = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.data.size());
}

double psnr_from_mse(double mse_value) {
  if (mse_value <= 0.0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / mse_value));
}

double psnr(const ImageBuffer& a, const ImageBuffer& b) { return psnr_from_mse(mse(a, b)); }

}  // namespace iftsplat
