#pragma once

#include <limits>
#include <optional>
#include <vector>

#include "sqba/oracle.hpp"
#include "sqba/tensor.hpp"

namespace sqba {

// A point in an attack where the best relative perturbation improved:
// the oracle query count at that moment and the rho achieved.
struct SuccessEvent {
  long long queries = 0;
  double rho = 0.0;
};

// Running best-adversarial-example record for one attack session. Callers
// offer a candidate only right after an oracle query confirmed it
// adversarial, so everything recorded here is oracle-verified and stamped
// with the query count that paid for it.
class BestTracker {
 public:
  BestTracker(const Tensor& clean, const HardLabelOracle& oracle)
      : clean_(&clean), oracle_(&oracle), clean_norm_(l2_norm(clean)) {
    if (clean_norm_ == 0.0) throw std::invalid_argument("BestTracker: zero clean example");
  }

  void offer(const Tensor& adversarial) {
    const double r = l2_distance(*clean_, adversarial) / clean_norm_;
    if (r < best_rho_) {
      best_rho_ = r;
      best_ = adversarial;
      events_.push_back({oracle_->queries_used(), r});
    }
  }

  bool has() const { return best_.has_value(); }
  double best_rho() const { return best_rho_; }
  const std::optional<Tensor>& best() const { return best_; }
  const std::vector<SuccessEvent>& events() const { return events_; }

 private:
  const Tensor* clean_;
  const HardLabelOracle* oracle_;
  double clean_norm_;
  double best_rho_ = std::numeric_limits<double>::infinity();
  std::optional<Tensor> best_;
  std::vector<SuccessEvent> events_;
};

}  // namespace sqba
