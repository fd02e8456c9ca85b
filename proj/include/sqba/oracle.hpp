#pragma once

#include <string>

#include "sqba/errors.hpp"
#include "sqba/network.hpp"

namespace sqba {

// Hard-label access to a target network for one attack session: callers see
// only the predicted class, never logits or gradients. Every evaluation of
// the target counts against the query budget, and the count can never pass
// it because the check happens before the model runs.
class HardLabelOracle {
 public:
  HardLabelOracle(const Network& net, int true_class, long long budget)
      : net_(&net), true_class_(true_class), budget_(budget) {
    if (budget < 0) throw std::invalid_argument("oracle: negative budget");
    if (true_class < 0 || true_class >= net.num_classes)
      throw std::invalid_argument("oracle: true class out of range");
  }

  int query_class(const Tensor& x) {
    if (queries_used_ >= budget_)
      throw BudgetExhausted("query budget exhausted: " + std::to_string(queries_used_) + "/" +
                            std::to_string(budget_));
    ++queries_used_;
    return predict(*net_, x);
  }

  // +1 iff x is adversarial (predicted class differs from the session's
  // true class), -1 otherwise. Costs one query.
  int indicator(const Tensor& x) { return query_class(x) != true_class_ ? +1 : -1; }

  long long queries_used() const { return queries_used_; }
  long long budget() const { return budget_; }
  long long remaining() const { return budget_ - queries_used_; }
  int true_class() const { return true_class_; }

  // The valid input domain is public attack-surface knowledge, unlike the
  // model internals.
  DataRange range() const { return net_->range; }
  Shape input_shape() const { return net_->input; }

 private:
  const Network* net_;
  int true_class_;
  long long budget_;
  long long queries_used_ = 0;
};

}  // namespace sqba
