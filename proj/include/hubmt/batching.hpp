#pragma once

#include <cstdint>
#include <vector>

#include "hubmt/corpus_text.hpp"
#include "hubmt/vocab.hpp"

namespace hubmt {

// One padded training batch. Source rows are [<2tgt>, words..., <eos>];
// decoder input is [<bos>, words...] against labels [words..., <eos>].
struct Batch {
  int64_t rows = 0;
  int64_t src_len = 0;  // padded
  int64_t tgt_len = 0;  // padded
  std::vector<int32_t> src;         // rows * src_len
  std::vector<int32_t> tgt_in;      // rows * tgt_len
  std::vector<int32_t> tgt_out;     // rows * tgt_len
  std::vector<int32_t> src_lengths; // true lengths incl tag/eos
  std::vector<int32_t> tgt_lengths; // true lengths incl eos
  std::vector<uint8_t> tgt_include; // rows * tgt_len, 1 on non-pad label positions
  // padded token count that the budget constrains
  int64_t padded_tokens() const { return rows * std::max(src_len, tgt_len); }
};

struct BatchPlan {
  std::vector<Batch> batches;
  int64_t skipped = 0;  // pairs whose padded length alone exceeds the budget
};

// Length-bucketed, budget-respecting batches covering every pair exactly
// once; (corpus, seed) fully determines the result.
BatchPlan make_batches(const ParallelCorpus& corpus, const MultiVocab& vocab, int64_t budget,
                       uint64_t seed);

// Id conversion for one pair (exposed for decode paths and tests).
std::vector<int32_t> source_ids(const MultiVocab& vocab, const std::vector<std::string>& words,
                                const std::string& src_lang, const std::string& tgt_lang);

}  // namespace hubmt
