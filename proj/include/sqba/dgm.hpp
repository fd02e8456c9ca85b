#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "sqba/errors.hpp"
#include "sqba/network.hpp"
#include "sqba/tensor.hpp"

namespace sqba {

enum class NormMode { l2, linf };

struct DgmConfig {
  double epsilon = 0.02;  // per-step scale, in (0, 1]
  int max_iterations = 500;
  NormMode norm_mode = NormMode::l2;
  double penalty_cap = 0.3;
  // Tuning stage (ADAM on the iterate, minimizing MSE to the original).
  double tune_lr = 1e-2;
  int tune_max_steps = 1000;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
};

// Gradient of the class-c probability, scaled per norm mode: l2 divides by
// the (signed) maximum element, linf takes the sign. A zero maximum would
// make the l2 scaling undefined, so that case yields a zero tensor for the
// caller to handle.
inline Tensor directional_gradient(const Network& net, const Tensor& x, int c, NormMode mode) {
  Tensor g = prob_grad_input(net, x, c);
  if (mode == NormMode::linf) return sign(g);
  const double mx = *std::max_element(g.v.begin(), g.v.end());
  if (mx == 0.0) return Tensor(g.shape, 0.0);
  for (double& v : g.v) v /= mx;
  return g;
}

// Penalty weight min(e^{-4 lambda}, cap): monotone decreasing in lambda,
// always positive, capped where the exponential would exceed cap.
inline double penalty_weight(double lambda, double cap = 0.3) {
  return std::min(std::exp(-4.0 * lambda), cap);
}

// Penalty for a concrete iterate: lambda is the adversarial share of the
// probability mass split between the true and adversarial classes.
inline double penalty(const Network& net, const Tensor& x, int c_true, int c_adv,
                      double cap = 0.3) {
  if (c_adv == c_true) throw std::invalid_argument("penalty: adversarial class equals true class");
  const std::vector<double> p = softmax(forward(net, x));
  const double lambda = p[c_adv] / (p[c_true] + p[c_adv]);
  return penalty_weight(lambda, cap);
}

// mu = (-alpha) g_minus + (1 - alpha) g_plus: repelled from the true class,
// attracted toward the adversarial class.
inline Tensor perturbation_vector(const Tensor& g_minus, const Tensor& g_plus, double alpha) {
  check_same_shape(g_minus, g_plus);
  Tensor mu(g_minus.shape, 0.0);
  for (std::size_t i = 0; i < mu.v.size(); ++i)
    mu.v[i] = -alpha * g_minus.v[i] + (1.0 - alpha) * g_plus.v[i];
  return mu;
}

namespace detail {

// Indices of the two largest logits; ties resolve to the lowest index.
inline std::pair<int, int> top_two(const std::vector<double>& logits) {
  const int first = argmax_lowest(logits);
  int second = first == 0 ? 1 : 0;
  for (int i = 0; i < static_cast<int>(logits.size()); ++i) {
    if (i == first) continue;
    if (logits[i] > logits[second]) second = i;
  }
  return {first, second};
}

}  // namespace detail

// White-box attack: steps along the dual-gradient direction, re-choosing
// the runner-up class each iteration, until the prediction leaves c_true.
// Returns the first misclassified iterate (untuned). Every iterate stays
// inside the network's data range.
inline Tensor dgm_attack(const Network& net, const Tensor& x, int c_true, const DgmConfig& cfg) {
  if (cfg.epsilon <= 0.0 || cfg.epsilon > 1.0)
    throw std::invalid_argument("dgm_attack: epsilon must be in (0, 1]");
  if (cfg.max_iterations <= 0) throw std::invalid_argument("dgm_attack: max_iterations");
  Tensor cur = x;
  for (int t = 0; t <= cfg.max_iterations; ++t) {
    const auto [top, runner_up] = detail::top_two(forward(net, cur));
    if (top != c_true) return cur;
    if (t == cfg.max_iterations) break;
    const double alpha = penalty(net, cur, c_true, runner_up, cfg.penalty_cap);
    const Tensor g_plus = directional_gradient(net, cur, runner_up, cfg.norm_mode);
    const Tensor g_minus = directional_gradient(net, cur, c_true, cfg.norm_mode);
    const Tensor mu = perturbation_vector(g_minus, g_plus, alpha);
    cur = clamped(axpy(cur, cfg.epsilon, mu), net.range);
  }
  throw AttackFailed("dgm_attack: still classified as the true class after max_iterations");
}

// Pulls an adversarial example back toward x by ADAM steps on MSE(x, x'),
// clamped to the data range, stopping when the prediction would revert to
// c_true. Returns the lowest-MSE iterate that stayed adversarial, so the
// result never has a larger MSE than the input and is always adversarial.
inline Tensor dgm_tune(const Network& net, const Tensor& x, const Tensor& x_prime, int c_true,
                       const DgmConfig& cfg) {
  check_same_shape(x, x_prime);
  if (predict(net, x_prime) == c_true)
    throw std::invalid_argument("dgm_tune: x_prime is not adversarial");
  if (cfg.tune_max_steps <= 0) throw std::invalid_argument("dgm_tune: tune_max_steps");
  const double inv_m = 1.0 / static_cast<double>(x.v.size());
  Tensor cur = x_prime;
  Tensor best = x_prime;
  double best_mse = mse(x, x_prime);
  std::vector<double> m(x.v.size(), 0.0), v(x.v.size(), 0.0);
  for (int step = 1; step <= cfg.tune_max_steps; ++step) {
    const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < cur.v.size(); ++i) {
      const double g = 2.0 * (cur.v[i] - x.v[i]) * inv_m;
      m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * g;
      v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * g * g;
      const double mhat = m[i] / c1, vhat = v[i] / c2;
      cur.v[i] = net.range.clamp(cur.v[i] - cfg.tune_lr * mhat / (std::sqrt(vhat) + cfg.adam_eps));
    }
    if (predict(net, cur) == c_true) break;
    const double cur_mse = mse(x, cur);
    if (cur_mse < best_mse) {
      best_mse = cur_mse;
      best = cur;
    }
  }
  return best;
}

}  // namespace sqba
