#pragma once

#include <string>
#include <vector>

#include "iftsplat/errors.hpp"
#include "iftsplat/smallmath.hpp"

namespace iftsplat {

/// Pinhole camera with a rigid world-to-camera transform x_cam = R x + t.
/// Image coordinates: pixel (row i, col j) has center (j + 0.5, i + 0.5),
/// u = fx * x/z + cx, v = fy * y/z + cy; +z looks forward.
struct Camera {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  Mat3<double> rot;     // orthonormal
  Vec3<double> trans;
  int width = 1, height = 1;

  void validate() const;
};

/// Camera at `eye` looking at `target`, world up (0,0,1); image y points down.
Camera look_at(const Vec3<double>& eye, const Vec3<double>& target, double fx, double fy,
               int width, int height);

/// Row-major RGB image with values in [0,1].
struct ImageBuffer {
  int width = 0, height = 0;
  std::vector<double> data;  // width*height*3

  static ImageBuffer zeros(int w, int h) { return {w, h, std::vector<double>(w * h * 3, 0.0)}; }
  int pixel_count() const { return width * height; }
  int value_count() const { return width * height * 3; }
  double& at(int row, int col, int ch) { return data[(row * width + col) * 3 + ch]; }
  double at(int row, int col, int ch) const { return data[(row * width + col) * 3 + ch]; }
  void validate() const;
};

struct View {
  Camera camera;
  ImageBuffer image;
};

/// Set of posed views; resolutions may differ per view.
struct ContextSet {
  std::vector<View> views;

  int total_values() const {
    int n = 0;
    for (const View& v : views) n += v.image.value_count();
    return n;
  }
};

ContextSet concat(const ContextSet& a, const ContextSet& b);

/// Binary PPM (P6, maxval 255) I/O.
void write_ppm(const std::string& path, const ImageBuffer& img);
ImageBuffer read_ppm(const std::string& path);
std::vector<unsigned char> ppm_bytes(const ImageBuffer& img);
ImageBuffer ppm_from_bytes(const std::vector<unsigned char>& bytes);

double mse(const ImageBuffer& a, const ImageBuffer& b);
/// 10*log10(1/mse) with peak 1.0, capped at 99 dB.
double psnr(const ImageBuffer& a, const ImageBuffer& b);
double psnr_from_mse(double mse_value);

}  // namespace iftsplat
