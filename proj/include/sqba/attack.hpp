#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sqba/dgm.hpp"
#include "sqba/errors.hpp"
#include "sqba/network.hpp"
#include "sqba/oracle.hpp"
#include "sqba/surrogate.hpp"
#include "sqba/tensor.hpp"
#include "sqba/tracker.hpp"

namespace sqba {

struct SqbaConfig {
  long long query_budget = 1000;
  double rho_budget = 0.1;
  // Accepted line-search steps at or below this absolute length signal that
  // the surrogate direction has stalled, flipping beta to 0 for good.
  double beta_switch_threshold = 1.0;
  int mc_base = 10;  // probe count grows as ceil(mc_base * sqrt(t + 1))
  double delta_coefficient = 1e-2;
  double binary_search_tol = 1e-3;
  std::vector<double> eta_grid = {0.2, 0.4, 0.6, 0.8, 1.0};
  int max_line_search_halvings = 10;
  std::uint64_t seed = 0;
  int init_random_max_tries = 20;
  // Start with beta = 0 (pure Monte Carlo gradients). With no surrogate this
  // makes the run identical to the HSJA-style baseline.
  bool force_beta_zero = false;
  bool record_iterates = false;
  DgmConfig dgm;  // settings for the white-box fallback initializer
};

struct LineSearchResult {
  Tensor x_dot;
  double alpha = 0.0;
  int queries_spent = 0;
};

struct TraceRow {
  int t = 0;
  double dist = 0.0;  // D(x, x'_t) entering the iteration
  int beta = 0;       // beta that produced this iteration's gradient
  int p_t = 0;
  double delta = 0.0;
  long long queries = 0;  // queries used before this iteration's probes
};

struct AttackResult {
  bool success = false;
  std::optional<Tensor> adversarial;  // best (lowest-rho) verified iterate
  long long queries_used = 0;
  double final_rho = std::numeric_limits<double>::infinity();
  int iterations = 0;
  long long first_success_queries = -1;  // first event with rho <= rho_budget
  std::vector<TraceRow> trace;
  std::vector<SuccessEvent> events;  // rho improvements with query stamps
  std::string failure_reason;        // empty on success
  std::vector<Tensor> iterates;      // x'_t sequence when record_iterates set
};

inline int mc_probe_count(int t, int base) {
  return static_cast<int>(std::ceil(base * std::sqrt(static_cast<double>(t) + 1.0)));
}

struct McEstimate {
  Tensor gradient;
  int probes = 0;
  bool exhausted = false;  // budget ran out before all p probes were spent
};

// Monte Carlo gradient of the adversarial indicator at x_t: p standard
// normal directions probed at offset delta, combined with the mean
// indicator subtracted for variance reduction (when all probes agree the
// subtraction would cancel everything, so the plain signed mean is used).
// Runs out of budget gracefully: returns the partial estimate and flags it.
inline McEstimate mc_gradient(HardLabelOracle& oracle, const Tensor& x_t, double delta, int p,
                              std::mt19937_64& rng, BestTracker* best = nullptr) {
  if (p < 1) throw std::invalid_argument("mc_gradient: p must be >= 1");
  if (delta <= 0.0) throw std::invalid_argument("mc_gradient: delta must be positive");
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Tensor> dirs;
  std::vector<int> inds;
  dirs.reserve(p);
  McEstimate est{Tensor(x_t.shape, 0.0), 0, false};
  for (int i = 0; i < p; ++i) {
    Tensor mu(x_t.shape, 0.0);
    for (double& v : mu.v) v = gauss(rng);
    const Tensor probe = axpy(x_t, delta, mu);
    int h = 0;
    try {
      h = oracle.indicator(probe);
    } catch (const BudgetExhausted&) {
      est.exhausted = true;
      break;
    }
    if (h == +1 && best) best->offer(probe);
    dirs.push_back(std::move(mu));
    inds.push_back(h);
  }
  est.probes = static_cast<int>(dirs.size());
  if (est.probes == 0) return est;
  double mean_h = 0.0;
  for (int h : inds) mean_h += h;
  mean_h /= est.probes;
  const bool all_same = std::abs(mean_h) == 1.0;
  for (int i = 0; i < est.probes; ++i) {
    const double w = (all_same ? inds[i] : inds[i] - mean_h) / est.probes;
    for (std::size_t j = 0; j < est.gradient.v.size(); ++j)
      est.gradient.v[j] += w * dirs[i].v[j];
  }
  return est;
}

// g = beta * w/|w| + (1-beta) * b/|b| with beta in {0, 1}: the active term
// must be nonzero, the inactive one is ignored.
inline Tensor blend(const Tensor& grad_w, const Tensor& grad_b, int beta) {
  if (beta != 0 && beta != 1) throw std::invalid_argument("blend: beta must be 0 or 1");
  const Tensor& active = beta == 1 ? grad_w : grad_b;
  if (l2_norm(active) == 0.0) throw DegenerateGradient("blend: selected gradient is zero");
  return normalized(active);
}

// Steps from x_prime along unit direction g, starting at alpha0 and halving
// until the clamped point is adversarial. nullopt after max_halvings
// failures signals a stalled direction.
inline std::optional<LineSearchResult> line_search_to_boundary(
    HardLabelOracle& oracle, const Tensor& x_prime, const Tensor& g, double alpha0,
    int max_halvings, DataRange range, BestTracker* best = nullptr) {
  if (alpha0 <= 0.0) throw std::invalid_argument("line search: alpha0 must be positive");
  if (std::abs(l2_norm(g) - 1.0) > 1e-6)
    throw std::invalid_argument("line search: direction must be unit length");
  double alpha = alpha0;
  for (int k = 0; k <= max_halvings; ++k) {
    const Tensor cand = clamped(axpy(x_prime, alpha, g), range);
    if (oracle.indicator(cand) == +1) {
      if (best) best->offer(cand);
      return LineSearchResult{cand, alpha, k + 1};
    }
    alpha *= 0.5;
  }
  return std::nullopt;
}

// Bisects the segment between the adversarial x_dot (zeta = 0) and the
// clean x (zeta = 1), keeping the largest zeta still adversarial, until the
// interval is within tol. The caller must have verified x_dot adversarial.
// Budget exhaustion mid-search returns the best verified point so far.
inline Tensor binary_search_projection(HardLabelOracle& oracle, const Tensor& x,
                                       const Tensor& x_dot, double tol,
                                       BestTracker* best = nullptr) {
  if (tol <= 0.0 || tol >= 1.0)
    throw std::invalid_argument("binary_search_projection: tol must be in (0, 1)");
  double lo = 0.0, hi = 1.0;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    const Tensor cand = lerp(x_dot, x, mid);
    int h = 0;
    try {
      h = oracle.indicator(cand);
    } catch (const BudgetExhausted&) {
      break;
    }
    if (h == +1) {
      if (best) best->offer(cand);
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lerp(x_dot, x, lo);
}

namespace detail {

inline void validate_attack_config(const SqbaConfig& cfg) {
  if (cfg.query_budget < 0) throw std::invalid_argument("attack: negative query budget");
  if (cfg.rho_budget <= 0.0) throw std::invalid_argument("attack: rho budget must be positive");
  if (cfg.mc_base < 1) throw std::invalid_argument("attack: mc_base must be >= 1");
  if (cfg.delta_coefficient <= 0.0) throw std::invalid_argument("attack: delta coefficient");
  if (cfg.binary_search_tol <= 0.0 || cfg.binary_search_tol >= 1.0)
    throw std::invalid_argument("attack: binary search tol must be in (0, 1)");
  if (cfg.max_line_search_halvings < 0) throw std::invalid_argument("attack: halvings");
  if (cfg.init_random_max_tries < 0) throw std::invalid_argument("attack: init tries");
}

// Maps the sign of the surrogate loss gradient onto the data range:
// -1 -> lo, +1 -> hi, 0 -> midpoint.
inline Tensor sign_init_image(const Network& surrogate, const Tensor& x, int c_true,
                              DataRange range) {
  const Tensor s = sign(loss_grad_input(surrogate, x, c_true));
  Tensor out(x.shape, range.mid());
  for (std::size_t i = 0; i < s.v.size(); ++i) {
    if (s.v[i] > 0.0) out.v[i] = range.hi;
    else if (s.v[i] < 0.0) out.v[i] = range.lo;
  }
  return out;
}

}  // namespace detail

// Boundary attack shared by SQBA and the HSJA-style baseline: initialize an
// adversarial point, then iterate gradient estimation, line search toward
// the boundary, and bisection back toward x. With a surrogate the gradient
// starts as the fan selection (beta = 1) and permanently falls back to the
// Monte Carlo estimate when the surrogate stalls; without one it is Monte
// Carlo from the start. Every oracle query is paid from one budget, and the
// best verified iterate is tracked so budget exhaustion anywhere still
// yields the strongest result seen.
inline AttackResult run_boundary_attack(const Network* surrogate, HardLabelOracle& oracle,
                                        const Tensor& x, int c_true, const SqbaConfig& cfg) {
  detail::validate_attack_config(cfg);
  if (c_true != oracle.true_class())
    throw std::invalid_argument("attack: true class disagrees with the oracle session");
  const DataRange range = oracle.range();
  AttackResult res;
  BestTracker best(x, oracle);
  std::mt19937_64 rng(cfg.seed);
  int t = 0;

  const auto finalize = [&] {
    res.queries_used = oracle.queries_used();
    res.iterations = t;
    res.adversarial = best.best();
    res.final_rho = best.best_rho();
    res.events = best.events();
    res.success = best.has() && best.best_rho() <= cfg.rho_budget;
    for (const SuccessEvent& e : best.events()) {
      if (e.rho <= cfg.rho_budget) {
        res.first_success_queries = e.queries;
        break;
      }
    }
    if (res.success) res.failure_reason.clear();
    else if (res.failure_reason.empty()) res.failure_reason = "BudgetExhausted";
    return res;
  };

  try {
    if (oracle.query_class(x) != c_true) {
      // The clean example is already misclassified: x itself is a zero-cost
      // adversarial example.
      best.offer(x);
      return finalize();
    }

    std::optional<Tensor> x0;
    if (surrogate) {
      const Tensor s = detail::sign_init_image(*surrogate, x, c_true, range);
      if (oracle.indicator(s) == +1) {
        best.offer(s);
        x0 = s;
      } else {
        try {
          const Tensor adv = dgm_attack(*surrogate, x, c_true, cfg.dgm);
          if (oracle.indicator(adv) == +1) {
            best.offer(adv);
            x0 = adv;
          }
        } catch (const AttackFailed&) {
          // White-box fallback failed on the surrogate; try random images.
        }
      }
    }
    if (!x0) {
      std::uniform_real_distribution<double> uni(range.lo, range.hi);
      for (int i = 0; i < cfg.init_random_max_tries && !x0; ++i) {
        Tensor r(x.shape, 0.0);
        for (double& v : r.v) v = uni(rng);
        if (oracle.indicator(r) == +1) {
          best.offer(r);
          x0 = r;
        }
      }
    }
    if (!x0) {
      res.failure_reason = "InitFailed";
      return finalize();
    }

    Tensor x_t = binary_search_projection(oracle, x, *x0, cfg.binary_search_tol, &best);
    int beta = (surrogate && !cfg.force_beta_zero) ? 1 : 0;
    std::optional<GradientFan> fan;

    while (oracle.remaining() > 0) {
      ++t;
      if (cfg.record_iterates) res.iterates.push_back(x_t);
      const double dist = l2_distance(x, x_t);
      if (dist == 0.0) break;
      const double delta = cfg.delta_coefficient * dist;
      const int p_t = mc_probe_count(t, cfg.mc_base);
      const long long queries_before = oracle.queries_used();

      Tensor g(x.shape, 0.0);
      bool have_g = false;
      if (beta == 1) {
        if (!fan) {
          try {
            const Tensor v = transfer_direction(*surrogate, x, c_true);
            fan = gradient_fan(*surrogate, x, v, cfg.eta_grid, c_true);
          } catch (const DegenerateDirection&) {
            fan = GradientFan{};  // empty fan: selection below can never pass
          }
        }
        const auto sel = select_gradient(*fan, oracle, x, x_t, delta, &best);
        if (sel) {
          g = blend(*sel, Tensor(x.shape, 0.0), 1);
          have_g = true;
        } else {
          beta = 0;  // surrogate stalled; one-way switch
        }
      }
      if (!have_g) {
        const McEstimate est = mc_gradient(oracle, x_t, delta, p_t, rng, &best);
        if (est.exhausted) break;
        try {
          g = blend(Tensor(x.shape, 0.0), est.gradient, 0);
          have_g = true;
        } catch (const DegenerateGradient&) {
          // Cancelled estimate; next iteration draws fresh directions.
        }
      }
      res.trace.push_back({t, dist, beta, p_t, delta, queries_before});
      if (!have_g) continue;

      const auto ls = line_search_to_boundary(oracle, x_t, g, dist,
                                              cfg.max_line_search_halvings, range, &best);
      if (!ls) {
        beta = 0;  // no adversarial step along g: treat as a stall
        continue;
      }
      if (ls->alpha <= cfg.beta_switch_threshold) beta = 0;
      x_t = binary_search_projection(oracle, x, ls->x_dot, cfg.binary_search_tol, &best);
    }
  } catch (const BudgetExhausted&) {
    // Out of queries somewhere in the loop; fall through with the best
    // verified iterate.
  }
  return finalize();
}

inline AttackResult sqba_attack(const Network& surrogate, HardLabelOracle& oracle,
                                const Tensor& x, int c_true, const SqbaConfig& cfg) {
  return run_boundary_attack(&surrogate, oracle, x, c_true, cfg);
}

}  // namespace sqba
