#pragma once

#include <cmath>

namespace iftsplat {

/// First-order dual number. Running a kernel templated on the scalar type
/// with Dual inputs propagates exact forward-mode tangents. The value lane
/// performs exactly the same double operations as a plain-double run, so
/// value parts stay bitwise identical and all branch decisions agree.
struct Dual {
  double v = 0.0;
  double d = 0.0;

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT: implicit from constants
  Dual(double value, double tangent) : v(value), d(tangent) {}

  Dual& operator+=(const Dual& o) {
    v += o.v;
    d += o.d;
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    v -= o.v;
    d -= o.d;
    return *this;
  }
  Dual& operator*=(const Dual& o) {
    d = d * o.v + v * o.d;
    v *= o.v;
    return *this;
  }
};

inline Dual operator+(Dual a, const Dual& b) { return a += b; }
inline Dual operator-(Dual a, const Dual& b) { return a -= b; }
inline Dual operator-(const Dual& a) { return {-a.v, -a.d}; }
inline Dual operator*(const Dual& a, const Dual& b) {
  return {a.v * b.v, a.d * b.v + a.v * b.d};
}
inline Dual operator/(const Dual& a, const Dual& b) {
  const double iv = 1.0 / b.v;
  return {a.v * iv, (a.d - a.v * iv * b.d) * iv};
}

inline bool operator<(const Dual& a, const Dual& b) { return a.v < b.v; }
inline bool operator>(const Dual& a, const Dual& b) { return a.v > b.v; }
inline bool operator==(const Dual& a, const Dual& b) { return a.v == b.v; }

inline Dual exp(const Dual& a) {
  const double e = std::exp(a.v);
  return {e, e * a.d};
}
inline Dual log(const Dual& a) { return {std::log(a.v), a.d / a.v}; }
inline Dual log1p(const Dual& a) { return {std::log1p(a.v), a.d / (1.0 + a.v)}; }
inline Dual sqrt(const Dual& a) {
  const double s = std::sqrt(a.v);
  return {s, 0.5 * a.d / s};
}
inline Dual abs(const Dual& a) { return a.v < 0.0 ? -a : a; }

inline double value_of(double x) { return x; }
inline double value_of(const Dual& x) { return x.v; }
inline double tangent_of(double) { return 0.0; }
inline double tangent_of(const Dual& x) { return x.d; }

}  // namespace iftsplat
