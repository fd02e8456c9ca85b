#pragma once

#include <stdexcept>
#include <string>

namespace sqba {

// Raised by the hard-label oracle when a query would exceed the session budget.
class BudgetExhausted : public std::runtime_error {
 public:
  explicit BudgetExhausted(const std::string& what) : std::runtime_error(what) {}
};

// Malformed or incompatible model/dataset file.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Training produced a non-finite loss.
class TrainingError : public std::runtime_error {
 public:
  explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

// White-box attack could not find an adversarial example within its iteration cap.
class AttackFailed : public std::runtime_error {
 public:
  explicit AttackFailed(const std::string& what) : std::runtime_error(what) {}
};

// A gradient needed as a direction came out identically zero.
class DegenerateDirection : public std::runtime_error {
 public:
  explicit DegenerateDirection(const std::string& what) : std::runtime_error(what) {}
};

// The gradient selected for blending has zero norm.
class DegenerateGradient : public std::runtime_error {
 public:
  explicit DegenerateGradient(const std::string& what) : std::runtime_error(what) {}
};

// Dataset cannot supply what was requested (e.g. not enough correctly
// classified examples).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace sqba
