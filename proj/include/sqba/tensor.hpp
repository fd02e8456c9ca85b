#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace sqba {

// (channels, height, width) layout; dense data is stored row-major per channel.
struct Shape {
  int channels = 0;
  int height = 0;
  int width = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(channels) * height * width;
  }
  bool operator==(const Shape&) const = default;
};

// Valid pixel range of the example space. All clamping uses this interval.
struct DataRange {
  double lo = 0.0;
  double hi = 1.0;

  double mid() const { return 0.5 * (lo + hi); }
  double clamp(double v) const { return std::min(hi, std::max(lo, v)); }
};

// A single example: flat pixel vector plus its shape. Arithmetic is kept in
// double; files store float32 (see io.hpp).
struct Tensor {
  std::vector<double> v;
  Shape shape;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0) : v(s.size(), fill), shape(s) {}
  Tensor(std::vector<double> data, Shape s) : v(std::move(data)), shape(s) {
    if (v.size() != s.size()) throw std::invalid_argument("tensor: data/shape mismatch");
  }

  std::size_t size() const { return v.size(); }
  double& operator[](std::size_t i) { return v[i]; }
  double operator[](std::size_t i) const { return v[i]; }
};

inline void check_same_shape(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) throw std::invalid_argument("tensor: shape mismatch");
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b);
  Tensor out(a.shape);
  for (std::size_t i = 0; i < a.size(); ++i) out.v[i] = a.v[i] + b.v[i];
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b);
  Tensor out(a.shape);
  for (std::size_t i = 0; i < a.size(); ++i) out.v[i] = a.v[i] - b.v[i];
  return out;
}

inline Tensor scale(const Tensor& a, double s) {
  Tensor out(a.shape);
  for (std::size_t i = 0; i < a.size(); ++i) out.v[i] = a.v[i] * s;
  return out;
}

// a + s*b
inline Tensor axpy(const Tensor& a, double s, const Tensor& b) {
  check_same_shape(a, b);
  Tensor out(a.shape);
  for (std::size_t i = 0; i < a.size(); ++i) out.v[i] = a.v[i] + s * b.v[i];
  return out;
}

// (1-z)*a + z*b
inline Tensor lerp(const Tensor& a, const Tensor& b, double z) {
  check_same_shape(a, b);
  Tensor out(a.shape);
  for (std::size_t i = 0; i < a.size(); ++i) out.v[i] = (1.0 - z) * a.v[i] + z * b.v[i];
  return out;
}

inline double dot(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.v[i] * b.v[i];
  return s;
}

inline double l2_norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

inline double l2_distance(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.v[i] - b.v[i];
    s += d * d;
  }
  return std::sqrt(s);
}

inline Tensor clamped(const Tensor& a, const DataRange& r) {
  Tensor out(a.shape);
  for (std::size_t i = 0; i < a.size(); ++i) out.v[i] = r.clamp(a.v[i]);
  return out;
}

// Entrywise sign, entries in {-1, 0, +1}.
inline Tensor sign(const Tensor& a) {
  Tensor out(a.shape);
  for (std::size_t i = 0; i < a.size(); ++i)
    out.v[i] = (a.v[i] > 0.0) ? 1.0 : (a.v[i] < 0.0 ? -1.0 : 0.0);
  return out;
}

// Unit l2 rescale; zero input stays zero.
inline Tensor normalized(const Tensor& a) {
  const double n = l2_norm(a);
  if (n == 0.0) return a;
  return scale(a, 1.0 / n);
}

inline bool all_finite(const Tensor& a) {
  return std::all_of(a.v.begin(), a.v.end(), [](double x) { return std::isfinite(x); });
}

inline double mse(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.v[i] - b.v[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

}  // namespace sqba
