#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "sqba/dataset.hpp"
#include "sqba/errors.hpp"
#include "sqba/network.hpp"
#include "sqba/oracle.hpp"
#include "sqba/tensor.hpp"
#include "sqba/tracker.hpp"

namespace sqba {

// Candidates below this scale sit too close to the clean example, where
// surrogate gradients stay near-parallel to the transfer direction and add
// no new information to the selection.
inline constexpr double kSelectEtaMin = 0.2;

// Surrogate loss gradients sampled along the transfer direction, one per
// eta. Gradients are unit l2-normalized; angles are cosines against the
// transfer direction. Entries whose gradient vanished are dropped and their
// etas recorded.
struct GradientFan {
  std::vector<double> etas;
  std::vector<Tensor> gradients;
  std::vector<double> angles;
  std::vector<double> dropped_etas;
};

inline double cos_angle(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b);
  const double na = l2_norm(a), nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) throw std::invalid_argument("cos_angle: zero vector");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

// Sign vector of the surrogate's loss gradient at x: the direction along
// which candidate examples are laid out, entries in {-1, 0, +1}.
inline Tensor transfer_direction(const Network& surrogate, const Tensor& x, int c_true) {
  const Tensor g = loss_grad_input(surrogate, x, c_true);
  if (l2_norm(g) == 0.0) throw DegenerateDirection("transfer_direction: zero loss gradient");
  return sign(g);
}

// Loss gradients at x + eta * v for each eta in the grid, deterministic in
// (surrogate, x, v, eta_grid).
inline GradientFan gradient_fan(const Network& surrogate, const Tensor& x, const Tensor& v,
                                const std::vector<double>& eta_grid, int c_true) {
  for (std::size_t i = 0; i < eta_grid.size(); ++i) {
    if (eta_grid[i] <= 0.0 || eta_grid[i] > 1.0)
      throw std::invalid_argument("gradient_fan: eta must be in (0, 1]");
    if (i > 0 && eta_grid[i] <= eta_grid[i - 1])
      throw std::invalid_argument("gradient_fan: eta grid must be ascending");
  }
  GradientFan fan;
  for (const double eta : eta_grid) {
    const Tensor probe = axpy(x, eta, v);
    Tensor g = loss_grad_input(surrogate, probe, c_true);
    if (l2_norm(g) == 0.0) {
      fan.dropped_etas.push_back(eta);
      continue;
    }
    fan.angles.push_back(cos_angle(v, g));
    fan.etas.push_back(eta);
    fan.gradients.push_back(normalized(g));
  }
  return fan;
}

// Picks the fan gradient whose probe point x_t + 2*delta*g lands adversarial
// and closest to the clean example x. Only candidates with eta >=
// kSelectEtaMin are probed, one oracle query each. nullopt means no
// candidate passed, the signal for the attack to fall back to the
// Monte Carlo estimate.
inline std::optional<Tensor> select_gradient(const GradientFan& fan, HardLabelOracle& oracle,
                                             const Tensor& x, const Tensor& x_t, double delta,
                                             BestTracker* best = nullptr) {
  if (delta <= 0.0) throw std::invalid_argument("select_gradient: delta must be positive");
  std::optional<Tensor> chosen;
  double chosen_dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < fan.etas.size(); ++i) {
    if (fan.etas[i] < kSelectEtaMin) continue;
    const Tensor probe = axpy(x_t, 2.0 * delta, fan.gradients[i]);
    if (oracle.indicator(probe) != +1) continue;
    if (best) best->offer(probe);
    const double d = l2_distance(x, probe);
    if (d < chosen_dist) {
      chosen_dist = d;
      chosen = fan.gradients[i];
    }
  }
  return chosen;
}

// Per-eta summary of cos_angle(transfer direction, fan gradient), averaged
// over correctly classified examples and all given surrogates.
struct AngleRow {
  double eta = 0.0;
  double mean_cos_angle = 0.0;
  double stddev = 0.0;
  int n = 0;
};

inline std::vector<AngleRow> angle_profile(const std::vector<const Network*>& surrogates,
                                           const Dataset& data,
                                           const std::vector<double>& eta_grid) {
  std::vector<std::vector<double>> samples(eta_grid.size());
  for (const Network* net : surrogates) {
    for (std::size_t i = 0; i < data.size(); ++i) {
      const Tensor& x = data.images[i];
      if (predict(*net, x) != data.labels[i]) continue;
      Tensor v(x.shape, 0.0);
      try {
        v = transfer_direction(*net, x, data.labels[i]);
      } catch (const DegenerateDirection&) {
        continue;
      }
      const GradientFan fan = gradient_fan(*net, x, v, eta_grid, data.labels[i]);
      for (std::size_t j = 0; j < fan.etas.size(); ++j) {
        const auto it = std::find(eta_grid.begin(), eta_grid.end(), fan.etas[j]);
        samples[static_cast<std::size_t>(it - eta_grid.begin())].push_back(fan.angles[j]);
      }
    }
  }
  std::vector<AngleRow> rows;
  rows.reserve(eta_grid.size());
  for (std::size_t j = 0; j < eta_grid.size(); ++j) {
    AngleRow row;
    row.eta = eta_grid[j];
    row.n = static_cast<int>(samples[j].size());
    if (row.n > 0) {
      double sum = 0.0;
      for (double a : samples[j]) sum += a;
      row.mean_cos_angle = sum / row.n;
      if (row.n > 1) {
        double ss = 0.0;
        for (double a : samples[j]) ss += (a - row.mean_cos_angle) * (a - row.mean_cos_angle);
        row.stddev = std::sqrt(ss / (row.n - 1));
      }
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace sqba
