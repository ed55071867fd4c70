#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "hubmt/common.hpp"

namespace hubmt {

using EMat = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EVec = Eigen::Matrix<real, Eigen::Dynamic, 1>;

// Per-language word vector table. Rows are length-normalized at load.
// The alignment transform maps this space into the hub (pivot) space;
// aligned lookups always go through it.
class EmbeddingSpace {
 public:
  EmbeddingSpace() = default;
  EmbeddingSpace(std::string lang, int64_t dim);

  static EmbeddingSpace load_vec(const std::string& path, const std::string& lang);
  void save_vec(const std::string& path) const;  // writes aligned vectors

  void add_word(const std::string& word, const EVec& vector);  // first occurrence wins
  // Builds the hashed character-n-gram bank from the current rows. Called by
  // load_vec; call manually after bulk add_word use.
  void build_ngram_bank();

  const std::string& lang() const { return lang_; }
  int64_t dim() const { return dim_; }
  int64_t size() const { return static_cast<int64_t>(words_.size()); }
  const std::vector<std::string>& words() const { return words_; }
  const EMat& vectors() const { return vectors_; }

  bool contains(const std::string& word) const { return index_.count(word) > 0; }
  std::optional<int32_t> word_index(const std::string& word) const;

  // Raw-space vector with subword fallback: the stored row when the word is
  // known, otherwise the mean of its hashed character-n-gram bucket vectors
  // (boundary-marked, n in [nmin, nmax]). Always produces a vector.
  EVec oov_vector(const std::string& word) const;

  // Hub-space lookup: W * oov_vector(word). Identity transform for the pivot.
  EVec lookup(const std::string& word) const;

  void set_transform(const EMat& w);
  bool has_transform() const { return has_transform_; }
  const EMat& transform() const { return transform_; }

  struct NgramParams {
    int64_t buckets = 50000;
    int nmin = 3;
    int nmax = 6;
  };
  const NgramParams& ngram_params() const { return ngram_params_; }

  static uint32_t ngram_hash(const std::string& gram);

 private:
  std::string lang_;
  int64_t dim_ = 0;
  std::vector<std::string> words_;
  std::unordered_map<std::string, int32_t> index_;
  EMat vectors_;  // rows normalized
  EMat transform_;
  bool has_transform_ = false;
  NgramParams ngram_params_;
  // bucket -> mean vector of contributing words; only touched buckets stored
  std::unordered_map<uint32_t, EVec> ngram_bank_;
};

std::vector<std::string> char_ngrams(const std::string& word, int nmin, int nmax);

}  // namespace hubmt
