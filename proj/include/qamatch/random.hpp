#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include "qamatch/tensor.hpp"

namespace qamatch {

using Rng = std::mt19937_64;

// Independent, reproducible stream for (seed, tags...), e.g. (run_seed, epoch).
Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> tags = {});

// Fills every element uniformly from [-bound, bound].
void fill_uniform(Tensor& t, Rng& rng, double bound);

}  // namespace qamatch
