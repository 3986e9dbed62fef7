#pragma once

#include <stdexcept>
#include <string>

namespace fracinv {

/// Raised when a linear solve breaks down or a computed quantity is not finite.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what, int step = -1)
      : std::runtime_error(step >= 0 ? what + " (step " + std::to_string(step) + ")" : what),
        step_(step) {}

  int step() const noexcept { return step_; }

 private:
  int step_;
};

inline void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace fracinv
