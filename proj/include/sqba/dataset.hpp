#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "sqba/errors.hpp"
#include "sqba/tensor.hpp"

namespace sqba {

// In-memory labeled image set. Pixels live in `range`; labels are
// 0..num_classes-1.
struct Dataset {
  Shape shape;
  int num_classes = 0;
  DataRange range;
  std::vector<Tensor> images;
  std::vector<int> labels;

  std::size_t size() const { return images.size(); }
};

namespace detail {

// 3x3 box blur per channel; border windows shrink to the valid part.
inline Tensor blur3x3(const Tensor& t) {
  Tensor out(t.shape, 0.0);
  const int C = t.shape.channels, H = t.shape.height, W = t.shape.width;
  for (int c = 0; c < C; ++c) {
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        double s = 0.0;
        int n = 0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int yy = y + dy, xx = x + dx;
            if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
            s += t.v[(static_cast<std::size_t>(c) * H + yy) * W + xx];
            ++n;
          }
        }
        out.v[(static_cast<std::size_t>(c) * H + y) * W + x] = s / n;
      }
    }
  }
  return out;
}

}  // namespace detail

// One orthonormal, zero-mean, spatially smooth pattern per class. The
// class signals span a num_classes-dimensional subspace, so most random
// directions barely move an image toward another class.
inline std::vector<Tensor> make_prototypes(Shape shape, int num_classes, std::uint64_t seed) {
  if (static_cast<std::size_t>(num_classes) >= shape.size())
    throw DataError("make_prototypes: more classes than dimensions");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Tensor> protos;
  protos.reserve(num_classes);
  for (int c = 0; c < num_classes; ++c) {
    Tensor p(shape, 0.0);
    for (double& v : p.v) v = gauss(rng);
    p = detail::blur3x3(detail::blur3x3(p));
    double mean = 0.0;
    for (double v : p.v) mean += v;
    mean /= static_cast<double>(p.v.size());
    for (double& v : p.v) v -= mean;
    const double orig = l2_norm(p);
    for (const Tensor& q : protos) {
      const double d = dot(p, q);
      for (std::size_t i = 0; i < p.v.size(); ++i) p.v[i] -= d * q.v[i];
    }
    const double res = l2_norm(p);
    if (res < 1e-9 * orig) throw DataError("make_prototypes: degenerate basis");
    for (double& v : p.v) v /= res;
    protos.push_back(std::move(p));
  }
  return protos;
}

// Images are mid-gray plus amplitude * prototype[label] plus isotropic
// Gaussian noise, clamped to range. Labels cycle through the classes so
// every class is equally represented.
inline Dataset sample_dataset(const std::vector<Tensor>& prototypes, int count,
                              std::uint64_t seed, double amplitude = 0.8,
                              double noise_sigma = 0.18, DataRange range = {}) {
  if (prototypes.empty()) throw DataError("sample_dataset: no prototypes");
  if (count <= 0) throw DataError("sample_dataset: count must be positive");
  const Shape shape = prototypes.front().shape;
  const int k = static_cast<int>(prototypes.size());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Dataset ds;
  ds.shape = shape;
  ds.num_classes = k;
  ds.range = range;
  ds.images.reserve(count);
  ds.labels.reserve(count);
  const double mid = range.mid();
  for (int i = 0; i < count; ++i) {
    const int label = i % k;
    Tensor img(shape, 0.0);
    const Tensor& u = prototypes[label];
    for (std::size_t j = 0; j < img.v.size(); ++j)
      img.v[j] = range.clamp(mid + amplitude * u.v[j] + noise_sigma * gauss(rng));
    ds.images.push_back(std::move(img));
    ds.labels.push_back(label);
  }
  return ds;
}

inline Dataset make_synthetic_images(Shape shape, int num_classes, int count,
                                     std::uint64_t prototype_seed, std::uint64_t sample_seed,
                                     double amplitude = 0.8, double noise_sigma = 0.18,
                                     DataRange range = {}) {
  return sample_dataset(make_prototypes(shape, num_classes, prototype_seed), count,
                        sample_seed, amplitude, noise_sigma, range);
}

}  // namespace sqba
