#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "speedgov/math/special.hpp"

namespace speedgov {

// Quasirandom draw settings for simulated likelihood. Each random slope gets
// one dimension; dimension d uses the d-th prime as its radix.
struct HaltonPlan {
  int n_draws = 200;
  int dims = 2;
  int skip = 10;  // leading points discarded once, globally

  std::vector<int> bases() const {
    std::vector<int> out;
    int candidate = 2;
    while (static_cast<int>(out.size()) < dims) {
      bool prime = candidate >= 2;
      for (int d = 2; d * d <= candidate; ++d)
        if (candidate % d == 0) { prime = false; break; }
      if (prime) out.push_back(candidate);
      ++candidate;
    }
    return out;
  }
};

// Radical inverse of `index` in the given prime base; the index is 1-based so
// the value is always strictly inside (0,1).
inline double halton_sequence(int base, std::int64_t index) {
  if (base < 2) throw std::domain_error("halton base must be >= 2");
  if (index < 1) throw std::domain_error("halton index must be >= 1");
  double f = 1.0, r = 0.0;
  while (index > 0) {
    f /= base;
    r += f * static_cast<double>(index % base);
    index /= base;
  }
  return r;
}

// Standard-normal draw block for one user: n_draws x dims. User u owns
// sequence indices {skip + u*n_draws + 1, ..., skip + (u+1)*n_draws} in every
// dimension, so a user's draws are fixed regardless of panel order and no two
// users share points.
inline Eigen::MatrixXd normal_draws(const HaltonPlan& plan, std::int64_t user_index) {
  if (plan.n_draws < 1) throw std::domain_error("n_draws must be >= 1");
  if (user_index < 0) throw std::domain_error("user_index must be >= 0");
  const auto bases = plan.bases();
  Eigen::MatrixXd out(plan.n_draws, plan.dims);
  const std::int64_t base_index = plan.skip + user_index * plan.n_draws;
  for (int d = 0; d < plan.dims; ++d)
    for (int r = 0; r < plan.n_draws; ++r)
      out(r, d) = normal_quantile(halton_sequence(bases[d], base_index + r + 1));
  return out;
}

}  // namespace speedgov
