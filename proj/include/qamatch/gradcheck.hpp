#pragma once

#include <cstdint>
#include <string>

#include "qamatch/model.hpp"

namespace qamatch {

struct GradcheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  double loss = 0.0;
};

// Compares tape gradients of a random triplet's margin loss (M = 1) with
// central differences for every element of every parameter. The model uses
// `cfg` with a small fixed vocabulary; parameters are seeded and jittered so
// no ReLU sits exactly on its kink.
GradcheckResult gradcheck(ModelConfig cfg, std::uint64_t seed, double step = 1e-5);

// |a - n| / max(|a|, |n|, 1e-6)
double relative_error(double analytic, double numeric);

}  // namespace qamatch
