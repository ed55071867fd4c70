#pragma once

#include <map>
#include <string>

#include "hubmt/model.hpp"

namespace hubmt {

// Encoder-representation diagnostics over parallel dev data: how language
// independent is the latent space.
struct ReprDiagnostics {
  std::map<std::string, EVec> mean_state;    // per-language mean pooled encoding
  std::map<std::string, real> variance;      // per-language trace of covariance
  real paired_cosine = 0;                    // mean cosine of parallel encodings
  real random_pair_cosine = 0;               // shifted-pairing baseline
  int64_t pair_count = 0;
};

// Sentences are pooled over non-pad positions; every sentence is encoded
// with its own language's target tag so encodings are comparable across
// languages. Needs pairs spanning at least two languages.
ReprDiagnostics diagnose_representations(const TranslationModel& m, const ParallelCorpus& dev);

}  // namespace hubmt
