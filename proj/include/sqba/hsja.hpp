#pragma once

#include "sqba/attack.hpp"

namespace sqba {

// Pure hard-label baseline: the shared boundary-attack loop with no
// surrogate, Monte Carlo gradients from the start, uniform-random
// initialization, and the heavier probe schedule p_t = p0 * sqrt(t + 1).
struct HsjaConfig {
  long long query_budget = 1000;
  double rho_budget = 0.1;
  int p0 = 100;
  double delta_coefficient = 1e-2;
  double binary_search_tol = 1e-3;
  int max_line_search_halvings = 10;
  std::uint64_t seed = 0;
  int init_random_max_tries = 50;
  bool record_iterates = false;
};

inline AttackResult hsja_attack(HardLabelOracle& oracle, const Tensor& x, int c_true,
                                const HsjaConfig& cfg) {
  SqbaConfig sc;
  sc.query_budget = cfg.query_budget;
  sc.rho_budget = cfg.rho_budget;
  sc.mc_base = cfg.p0;
  sc.delta_coefficient = cfg.delta_coefficient;
  sc.binary_search_tol = cfg.binary_search_tol;
  sc.max_line_search_halvings = cfg.max_line_search_halvings;
  sc.seed = cfg.seed;
  sc.init_random_max_tries = cfg.init_random_max_tries;
  sc.force_beta_zero = true;
  sc.record_iterates = cfg.record_iterates;
  return run_boundary_attack(nullptr, oracle, x, c_true, sc);
}

}  // namespace sqba
