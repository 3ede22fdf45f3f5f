#pragma once

#include <cmath>

#include "iftsplat/dual.hpp"

namespace iftsplat {

template <class T>
struct Vec2 {
  T x{}, y{};
};

template <class T>
struct Vec3 {
  T x{}, y{}, z{};
};

/// Quaternion storage, wxyz order.
template <class T>
struct Quat {
  T w{}, x{}, y{}, z{};
};

/// Row-major 3x3.
template <class T>
struct Mat3 {
  T m[3][3]{};
};

/// Row-major 2x3.
template <class T>
struct Mat23 {
  T m[2][3]{};
};

/// Symmetric 2x2 [[a,b],[b,c]].
template <class T>
struct Sym2 {
  T a{}, b{}, c{};
};

template <class T>
Vec3<T> operator+(const Vec3<T>& u, const Vec3<T>& v) {
  return {u.x + v.x, u.y + v.y, u.z + v.z};
}
template <class T>
Vec3<T> operator-(const Vec3<T>& u, const Vec3<T>& v) {
  return {u.x - v.x, u.y - v.y, u.z - v.z};
}
template <class T, class S>
Vec3<T> operator*(const Vec3<T>& u, const S& s) {
  return {u.x * s, u.y * s, u.z * s};
}
template <class T>
T dot(const Vec3<T>& u, const Vec3<T>& v) {
  return u.x * v.x + u.y * v.y + u.z * v.z;
}
template <class T>
Vec3<T> cross(const Vec3<T>& u, const Vec3<T>& v) {
  return {u.y * v.z - u.z * v.y, u.z * v.x - u.x * v.z, u.x * v.y - u.y * v.x};
}
template <class T>
Vec3<T> normalized(const Vec3<T>& u) {
  using std::sqrt;
  const T n = sqrt(dot(u, u));
  return {u.x / n, u.y / n, u.z / n};
}

template <class M, class T>
Vec3<T> mat_vec(const Mat3<M>& A, const Vec3<T>& v) {
  return {A.m[0][0] * v.x + A.m[0][1] * v.y + A.m[0][2] * v.z,
          A.m[1][0] * v.x + A.m[1][1] * v.y + A.m[1][2] * v.z,
          A.m[2][0] * v.x + A.m[2][1] * v.y + A.m[2][2] * v.z};
}

template <class M, class T>
Vec3<T> mat_tvec(const Mat3<M>& A, const Vec3<T>& v) {
  return {A.m[0][0] * v.x + A.m[1][0] * v.y + A.m[2][0] * v.z,
          A.m[0][1] * v.x + A.m[1][1] * v.y + A.m[2][1] * v.z,
          A.m[0][2] * v.x + A.m[1][2] * v.y + A.m[2][2] * v.z};
}

/// Rotation matrix from a unit quaternion (wxyz).
template <class T>
Mat3<T> rotation_from_unit_quat(const Quat<T>& q) {
  const T w = q.w, x = q.x, y = q.y, z = q.z;
  Mat3<T> R;
  R.m[0][0] = T(1) - T(2) * (y * y + z * z);
  R.m[0][1] = T(2) * (x * y - w * z);
  R.m[0][2] = T(2) * (x * z + w * y);
  R.m[1][0] = T(2) * (x * y + w * z);
  R.m[1][1] = T(1) - T(2) * (x * x + z * z);
  R.m[1][2] = T(2) * (y * z - w * x);
  R.m[2][0] = T(2) * (x * z - w * y);
  R.m[2][1] = T(2) * (y * z + w * x);
  R.m[2][2] = T(1) - T(2) * (x * x + y * y);
  return R;
}

/// dR/dq_hat for each unit-quaternion component, same layout as above.
template <class T>
void rotation_quat_derivatives(const Quat<T>& q, Mat3<T> dR[4]) {
  const T w = T(2) * q.w, x = T(2) * q.x, y = T(2) * q.y, z = T(2) * q.z;
  const T o = T(0);
  dR[0] = Mat3<T>{{{o, -z, y}, {z, o, -x}, {-y, x, o}}};
  dR[1] = Mat3<T>{{{o, y, z}, {y, -T(2) * x, -w}, {z, w, -T(2) * x}}};
  dR[2] = Mat3<T>{{{-T(2) * y, x, w}, {x, o, z}, {-w, z, -T(2) * y}}};
  dR[3] = Mat3<T>{{{-T(2) * z, -w, x}, {w, -T(2) * z, y}, {x, y, o}}};
}

/// R * diag(d) * R^T.
template <class T>
Mat3<T> sandwich_diag(const Mat3<T>& R, const Vec3<T>& d) {
  Mat3<T> out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      out.m[i][j] = R.m[i][0] * d.x * R.m[j][0] + R.m[i][1] * d.y * R.m[j][1] +
                    R.m[i][2] * d.z * R.m[j][2];
  return out;
}

/// (2x3) * (3x3) with a double right factor.
template <class T>
Mat23<T> mul_23_33(const Mat23<T>& A, const Mat3<double>& B) {
  Mat23<T> out;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j)
      out.m[i][j] =
          A.m[i][0] * B.m[0][j] + A.m[i][1] * B.m[1][j] + A.m[i][2] * B.m[2][j];
  return out;
}

/// A * S * A^T for a 2x3 A and symmetric 3x3 S, returned packed.
template <class T>
Sym2<T> sandwich_23(const Mat23<T>& A, const Mat3<T>& S) {
  T AS[2][3];
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j)
      AS[i][j] =
          A.m[i][0] * S.m[0][j] + A.m[i][1] * S.m[1][j] + A.m[i][2] * S.m[2][j];
  Sym2<T> out;
  out.a = AS[0][0] * A.m[0][0] + AS[0][1] * A.m[0][1] + AS[0][2] * A.m[0][2];
  out.b = AS[0][0] * A.m[1][0] + AS[0][1] * A.m[1][1] + AS[0][2] * A.m[1][2];
  out.c = AS[1][0] * A.m[1][0] + AS[1][1] * A.m[1][1] + AS[1][2] * A.m[1][2];
  return out;
}

template <class T>
T sigmoid(const T& x) {
  using std::exp;
  if (value_of(x) >= 0.0) {
    const T e = exp(-x);
    return T(1) / (T(1) + e);
  }
  const T e = exp(x);
  return e / (T(1) + e);
}

template <class T>
T softplus(const T& x) {
  using std::exp;
  using std::log1p;
  if (value_of(x) > 30.0) return x;
  return log1p(exp(x));
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

inline double value_of_scalar(double x) { return x; }

}  // namespace iftsplat
