#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

namespace svasr {

template <typename Scalar>
inline constexpr Scalar kLogZero = -std::numeric_limits<Scalar>::infinity();

/// ln(exp(a) + exp(b)) without overflow; -inf is the additive identity.
template <typename Scalar>
inline Scalar log_add(Scalar a, Scalar b) {
  if (a < b) std::swap(a, b);
  if (b == kLogZero<Scalar>) return a;
  return a + std::log1p(std::exp(b - a));
}

/// ln of a probability, mapping 0 to -inf.
template <typename Scalar>
inline Scalar safe_log(Scalar p) {
  return p > Scalar(0) ? std::log(p) : kLogZero<Scalar>;
}

}  // namespace svasr
