#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "hubmt/embedding_space.hpp"
#include "hubmt/tensor.hpp"

namespace hubmt {

// Merged multilingual vocabulary. Every word token carries its language as a
// "lang@" prefix; specials are <pad> <bos> <eos> <unk> plus one <2lang>
// target tag per language. Rows of word tokens come from the aligned hub
// space and are meant to stay frozen during NMT training.
class MultiVocab {
 public:
  static constexpr const char* kPad = "<pad>";
  static constexpr const char* kBos = "<bos>";
  static constexpr const char* kEos = "<eos>";
  static constexpr const char* kUnk = "<unk>";

  using Sentences = std::vector<std::vector<std::string>>;

  static MultiVocab build(const std::vector<std::pair<std::string, const Sentences*>>& corpora,
                          const std::map<std::string, const EmbeddingSpace*>& spaces,
                          uint64_t seed = 1);

  // Appends a language's tokens and tag; existing ids and rows are untouched.
  // Only legal on a frozen vocabulary.
  MultiVocab extend(const std::string& new_lang, const Sentences& corpus,
                    const EmbeddingSpace& space, uint64_t seed = 1) const;

  int64_t size() const { return static_cast<int64_t>(tokens_.size()); }
  int64_t dim() const { return dim_; }
  bool frozen() const { return frozen_; }
  void set_frozen(bool f) { frozen_ = f; }

  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(int32_t id) const { return tokens_.at(static_cast<size_t>(id)); }
  std::optional<int32_t> id_of(const std::string& token) const;

  // Word lookup: "lang@word" id, or unk when absent.
  int32_t word_id(const std::string& lang, const std::string& word) const;
  bool is_special(int32_t id) const { return special_.at(static_cast<size_t>(id)) != 0; }
  // Language of a token; empty string for specials (tags included).
  const std::string& lang_of(int32_t id) const { return token_lang_.at(static_cast<size_t>(id)); }
  // Surface word with the prefix stripped; specials come back verbatim.
  std::string surface(int32_t id) const;

  int32_t pad_id() const { return pad_id_; }
  int32_t bos_id() const { return bos_id_; }
  int32_t eos_id() const { return eos_id_; }
  int32_t unk_id() const { return unk_id_; }
  int32_t tag_id(const std::string& lang) const;

  const std::vector<std::string>& languages() const { return languages_; }
  bool has_language(const std::string& lang) const;

  // Mask over token ids: true on lang's tokens and on every special.
  const std::vector<uint8_t>& lang_mask(const std::string& lang) const;

  Tensor& embedding() { return embedding_; }
  const Tensor& embedding() const { return embedding_; }

  // Freeze mask covering word rows (specials stay trainable).
  std::shared_ptr<std::vector<uint8_t>> make_embedding_freeze_mask() const;

  void save(const std::string& manifest_path, const std::string& matrix_path) const;
  static MultiVocab load(const std::string& manifest_path, const std::string& matrix_path);
  // Rebuild from an id-ordered token list plus flat row-major rows.
  static MultiVocab from_tokens(const std::vector<std::string>& tokens, int64_t dim, bool frozen,
                                std::vector<real> rows);

  static std::string escape_word(const std::string& word);
  static std::string unescape_word(const std::string& word);
  static std::string make_token(const std::string& lang, const std::string& word);

 private:
  void index_token(const std::string& tok, const std::string& lang, bool special);
  void rebuild_masks();
  void init_special_row(int64_t row, Rng& rng);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int32_t> token_to_id_;
  std::vector<uint8_t> special_;
  std::vector<std::string> token_lang_;  // "" for specials
  std::vector<std::string> languages_;
  std::map<std::string, std::vector<uint8_t>> lang_masks_;
  std::map<std::string, int32_t> tag_ids_;
  Tensor embedding_;
  int64_t dim_ = 0;
  bool frozen_ = true;
  int32_t pad_id_ = 0, bos_id_ = 1, eos_id_ = 2, unk_id_ = 3;
};

}  // namespace hubmt
