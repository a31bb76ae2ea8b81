#pragma once

#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace speedgov {

// Thrown when an input file or row violates the documented schema.
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown when an estimator's preconditions are not met (degenerate design,
// empty group, no identifying variation).
struct EstimationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Pairwise summation: result does not depend on how callers chunk the work,
// only on element order.
inline double pairwise_sum(std::span<const double> xs) {
  if (xs.size() <= 8) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

inline double pairwise_sum(const std::vector<double>& xs) {
  return pairwise_sum(std::span<const double>(xs));
}

// 64-bit FNV-1a. Used for input digests in run manifests; not cryptographic.
inline std::uint64_t fnv1a64(std::span<const char> bytes,
                             std::uint64_t h = 1469598103934665603ull) {
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string fnv1a64_hex(const std::string& bytes) {
  const std::uint64_t h = fnv1a64(std::span<const char>(bytes.data(), bytes.size()));
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 0; i < 16; ++i) out[15 - i] = digits[(h >> (4 * i)) & 0xF];
  return out;
}

}  // namespace speedgov
