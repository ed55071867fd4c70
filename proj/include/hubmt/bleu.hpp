#pragma once

#include <string>
#include <vector>

#include "hubmt/common.hpp"

namespace hubmt {

struct BleuReport {
  real bleu = 0;             // [0, 100]
  real precisions[4] = {0, 0, 0, 0};
  real brevity_penalty = 1;
  real length_ratio = 0;
  int64_t hyp_length = 0;
  int64_t ref_length = 0;

  // BLEU recomputed from the report's own components.
  real recompute() const;
};

// Corpus-level 4-gram BLEU with clipped precisions and brevity penalty.
// No smoothing: a zero n-gram precision zeroes the score.
BleuReport bleu(const std::vector<std::vector<std::string>>& hyp,
                const std::vector<std::vector<std::string>>& ref);

}  // namespace hubmt
