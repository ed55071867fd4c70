#pragma once

#include <string>
#include <vector>

#include "hubmt/common.hpp"

namespace hubmt {

struct NoiseSpec {
  int64_t shuffle_n = 3;      // max displacement
  real word_dropout_p = 0.0;  // in [0, 1)
  uint64_t seed = 1;
};

// Bounded shuffle: sort positions by i + U[0, n+1) with stable ties. The
// output is a permutation and no token moves more than n positions.
std::vector<std::string> shuffle_noise(const std::vector<std::string>& tokens, int64_t n, Rng& rng);

// Independent per-token dropout that always keeps at least one token (the
// earliest survivor wins when everything would drop).
std::vector<std::string> word_dropout(const std::vector<std::string>& tokens, real p, Rng& rng);

std::vector<std::string> apply_noise(const std::vector<std::string>& tokens, const NoiseSpec& spec,
                                     Rng& rng);

}  // namespace hubmt
