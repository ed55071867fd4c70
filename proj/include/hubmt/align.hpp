#pragma once

#include <string>
#include <vector>

#include "hubmt/embedding_space.hpp"

namespace hubmt {

struct BilingualDictionary {
  std::string src_lang;
  std::string tgt_lang;
  std::vector<std::pair<std::string, std::string>> pairs;  // deduplicated

  static BilingualDictionary load(const std::string& path, const std::string& src_lang,
                                  const std::string& tgt_lang);
  void add(const std::string& src, const std::string& tgt);
};

struct AlignmentReport {
  std::string method;  // "procrustes" | "rcsls"
  real nn_accuracy = 0;
  real csls_accuracy = 0;
  int64_t dictionary_size = 0;
};

struct AlignOptions {
  int neighbors = 10;           // k for CSLS/RCSLS neighbor terms
  int rcsls_steps = 30;         // gradient-ascent iterations
  real rcsls_lr = 1.0;
  int64_t neighborhood = 20000; // top-frequency population for neighbor sets
};

// Orthogonal map W minimizing |W X - Y|_F over resolved dictionary pairs,
// via SVD of Y X^T. Requires at least dim resolvable pairs.
EMat procrustes(const EmbeddingSpace& src, const EmbeddingSpace& tgt,
                const BilingualDictionary& dict, int64_t* skipped_out = nullptr);

// RCSLS refinement from the Procrustes initialization; keeps the best W seen,
// so the returned criterion never drops below its initial value.
EMat rcsls_align(const EmbeddingSpace& src, const EmbeddingSpace& tgt,
                 const BilingualDictionary& dict, const AlignOptions& opts = {});

// Mean RCSLS criterion of mapped pairs under W (exposed for tests).
real rcsls_criterion(const EMat& w, const EMat& x_pairs, const EMat& y_pairs,
                     const EMat& src_population, const EMat& tgt_population, int k);

// Words of `space` ranked by CSLS against the query; ties broken by
// vocabulary index. r_S uses the query population when given, otherwise each
// candidate's own in-space neighborhood.
std::vector<std::pair<int32_t, real>> csls_rank(const EVec& query, const EmbeddingSpace& space,
                                                int k, const EMat* query_population = nullptr);

// Precision@1 under plain nearest-neighbor and CSLS retrieval over the
// dictionary. Both spaces must already be aligned into the hub.
AlignmentReport evaluate_alignment(const EmbeddingSpace& src, const EmbeddingSpace& tgt,
                                   const BilingualDictionary& dict, int k = 10,
                                   const std::string& method = "procrustes");

}  // namespace hubmt
