#pragma once

#include <stdexcept>
#include <string>

namespace anosov {

/// A numerical procedure broke down (non-finite state, singular solve, ...).
struct NumericalFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A computed object failed one of its checked properties.
struct VerificationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace anosov
