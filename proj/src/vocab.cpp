#include "hubmt/vocab.hpp"

#include <algorithm>
#include <fstream>

namespace hubmt {

std::string MultiVocab::escape_word(const std::string& word) {
  std::string out;
  out.reserve(word.size());
  for (char c : word) {
    if (c == '\\' || c == '@') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

std::string MultiVocab::unescape_word(const std::string& word) {
  std::string out;
  out.reserve(word.size());
  for (size_t i = 0; i < word.size(); ++i) {
    if (word[i] == '\\' && i + 1 < word.size()) ++i;
    out.push_back(word[i]);
  }
  return out;
}

std::string MultiVocab::make_token(const std::string& lang, const std::string& word) {
  return lang + "@" + escape_word(word);
}

void MultiVocab::index_token(const std::string& tok, const std::string& lang, bool special) {
  token_to_id_[tok] = static_cast<int32_t>(tokens_.size());
  tokens_.push_back(tok);
  special_.push_back(special ? 1 : 0);
  token_lang_.push_back(lang);
}

void MultiVocab::init_special_row(int64_t row, Rng& rng) {
  auto& vals = embedding_.values();
  for (int64_t c = 0; c < dim_; ++c) vals[static_cast<size_t>(row * dim_ + c)] = rng.uniform(-0.1, 0.1);
}

void MultiVocab::rebuild_masks() {
  lang_masks_.clear();
  for (const auto& lang : languages_) {
    std::vector<uint8_t> mask(tokens_.size(), 0);
    for (size_t i = 0; i < tokens_.size(); ++i)
      if (special_[i] || token_lang_[i] == lang) mask[i] = 1;
    lang_masks_[lang] = std::move(mask);
  }
}

MultiVocab MultiVocab::build(const std::vector<std::pair<std::string, const Sentences*>>& corpora,
                             const std::map<std::string, const EmbeddingSpace*>& spaces,
                             uint64_t seed) {
  MultiVocab v;
  if (corpora.empty()) throw ConfigError("build_vocab: no corpora given");
  for (const auto& [lang, _] : corpora) {
    auto it = spaces.find(lang);
    if (it == spaces.end() || it->second == nullptr)
      throw ConfigError("build_vocab: language '" + lang + "' has no aligned embedding space");
    if (v.dim_ == 0) v.dim_ = it->second->dim();
    if (it->second->dim() != v.dim_)
      throw ConfigError("build_vocab: embedding dim mismatch for language '" + lang + "'");
  }

  v.index_token(kPad, "", true);
  v.index_token(kBos, "", true);
  v.index_token(kEos, "", true);
  v.index_token(kUnk, "", true);
  for (const auto& [lang, _] : corpora) {
    v.languages_.push_back(lang);
    v.tag_ids_[lang] = static_cast<int32_t>(v.tokens_.size());
    v.index_token("<2" + lang + ">", "", true);
  }

  // Word types in first-occurrence order, per language.
  std::vector<EVec> rows;
  for (const auto& [lang, sentences] : corpora) {
    const EmbeddingSpace& space = *spaces.at(lang);
    for (const auto& sent : *sentences) {
      for (const auto& word : sent) {
        std::string tok = make_token(lang, word);
        if (v.token_to_id_.count(tok)) continue;
        v.index_token(tok, lang, false);
        rows.push_back(space.lookup(word));
      }
    }
  }

  v.embedding_ = Tensor::zeros({static_cast<int64_t>(v.tokens_.size()), v.dim_});
  Rng rng(seed);
  int64_t special_count = static_cast<int64_t>(v.tokens_.size()) - static_cast<int64_t>(rows.size());
  for (int64_t i = 0; i < special_count; ++i) v.init_special_row(i, rng);
  for (size_t i = 0; i < rows.size(); ++i) {
    int64_t row = special_count + static_cast<int64_t>(i);
    for (int64_t c = 0; c < v.dim_; ++c)
      v.embedding_.values()[static_cast<size_t>(row * v.dim_ + c)] = rows[i][c];
  }
  v.frozen_ = true;
  v.rebuild_masks();
  return v;
}

MultiVocab MultiVocab::extend(const std::string& new_lang, const Sentences& corpus,
                              const EmbeddingSpace& space, uint64_t seed) const {
  if (!frozen_)
    throw ContractError(
        "extend_vocab: base vocabulary is not frozen; extension is only sound when existing "
        "embedding rows never left the hub space");
  if (has_language(new_lang)) throw ConfigError("extend_vocab: language '" + new_lang + "' already present");
  if (space.dim() != dim_) throw ConfigError("extend_vocab: embedding dim mismatch for '" + new_lang + "'");

  MultiVocab v = *this;
  v.languages_.push_back(new_lang);
  int32_t tag = static_cast<int32_t>(v.tokens_.size());
  v.tag_ids_[new_lang] = tag;
  v.index_token("<2" + new_lang + ">", "", true);

  std::vector<EVec> rows;
  for (const auto& sent : corpus) {
    for (const auto& word : sent) {
      std::string tok = make_token(new_lang, word);
      if (v.token_to_id_.count(tok)) continue;
      v.index_token(tok, new_lang, false);
      rows.push_back(space.lookup(word));
    }
  }

  int64_t old_size = size();
  int64_t new_size = static_cast<int64_t>(v.tokens_.size());
  Tensor grown = Tensor::zeros({new_size, dim_});
  std::copy(embedding_.values().begin(), embedding_.values().end(), grown.values().begin());

  // New tag row: mean of the existing tag rows, a neutral "translate-to"
  // starting point for a language the decoder has never been asked for.
  {
    EVec mean = EVec::Zero(dim_);
    int64_t count = 0;
    for (const auto& [lang, id] : tag_ids_) {
      for (int64_t c = 0; c < dim_; ++c) mean[c] += embedding_.values()[static_cast<size_t>(id * dim_ + c)];
      ++count;
    }
    if (count > 0)
      mean /= static_cast<real>(count);
    else {
      Rng rng(seed);
      for (int64_t c = 0; c < dim_; ++c) mean[c] = rng.uniform(-0.1, 0.1);
    }
    for (int64_t c = 0; c < dim_; ++c) grown.values()[static_cast<size_t>(tag * dim_ + c)] = mean[c];
  }
  for (size_t i = 0; i < rows.size(); ++i) {
    int64_t row = old_size + 1 + static_cast<int64_t>(i);
    for (int64_t c = 0; c < dim_; ++c) grown.values()[static_cast<size_t>(row * dim_ + c)] = rows[i][c];
  }
  v.embedding_ = grown;
  v.rebuild_masks();
  return v;
}

std::optional<int32_t> MultiVocab::id_of(const std::string& token) const {
  auto it = token_to_id_.find(token);
  if (it == token_to_id_.end()) return std::nullopt;
  return it->second;
}

int32_t MultiVocab::word_id(const std::string& lang, const std::string& word) const {
  auto id = id_of(make_token(lang, word));
  return id ? *id : unk_id_;
}

std::string MultiVocab::surface(int32_t id) const {
  const std::string& tok = token(id);
  if (is_special(id)) return tok;
  auto pos = tok.find('@');
  return unescape_word(tok.substr(pos + 1));
}

int32_t MultiVocab::tag_id(const std::string& lang) const {
  auto it = tag_ids_.find(lang);
  if (it == tag_ids_.end()) throw ConfigError("unknown target language: " + lang);
  return it->second;
}

bool MultiVocab::has_language(const std::string& lang) const {
  return std::find(languages_.begin(), languages_.end(), lang) != languages_.end();
}

const std::vector<uint8_t>& MultiVocab::lang_mask(const std::string& lang) const {
  auto it = lang_masks_.find(lang);
  if (it == lang_masks_.end()) throw ConfigError("lang_mask: unknown language: " + lang);
  return it->second;
}

std::shared_ptr<std::vector<uint8_t>> MultiVocab::make_embedding_freeze_mask() const {
  auto mask = std::make_shared<std::vector<uint8_t>>(static_cast<size_t>(size() * dim_), 0);
  for (int64_t i = 0; i < size(); ++i) {
    if (special_[static_cast<size_t>(i)]) continue;
    for (int64_t c = 0; c < dim_; ++c) (*mask)[static_cast<size_t>(i * dim_ + c)] = 1;
  }
  return mask;
}

void MultiVocab::save(const std::string& manifest_path, const std::string& matrix_path) const {
  std::ofstream manifest(manifest_path);
  if (!manifest) throw DataError("cannot write vocabulary manifest: " + manifest_path);
  for (const auto& tok : tokens_) manifest << tok << '\n';

  std::ofstream matrix(matrix_path, std::ios::binary);
  if (!matrix) throw DataError("cannot write vocabulary matrix: " + matrix_path);
  const char magic[8] = {'H', 'M', 'T', 'E', 'M', 'B', '0', '1'};
  matrix.write(magic, 8);
  int64_t rows = size(), cols = dim_;
  uint8_t frozen = frozen_ ? 1 : 0;
  matrix.write(reinterpret_cast<const char*>(&rows), 8);
  matrix.write(reinterpret_cast<const char*>(&cols), 8);
  matrix.write(reinterpret_cast<const char*>(&frozen), 1);
  for (real v : embedding_.values()) {
    double d = static_cast<double>(v);
    matrix.write(reinterpret_cast<const char*>(&d), 8);
  }
}

MultiVocab MultiVocab::from_tokens(const std::vector<std::string>& tokens, int64_t dim, bool frozen,
                                   std::vector<real> rows) {
  MultiVocab v;
  for (const auto& line : tokens) {
    if (line.empty()) continue;
    bool special = line.front() == '<' && line.back() == '>' && line.find('@') == std::string::npos;
    std::string lang;
    if (!special) {
      auto pos = line.find('@');
      if (pos == std::string::npos)
        throw FormatError("vocabulary token without language prefix: " + line);
      lang = line.substr(0, pos);
    }
    if (special && line.size() > 3 && line[1] == '2') {
      std::string tag_lang = line.substr(2, line.size() - 3);
      v.tag_ids_[tag_lang] = static_cast<int32_t>(v.tokens_.size());
      v.languages_.push_back(tag_lang);
    }
    v.index_token(line, lang, special);
  }
  if (v.tokens_.size() < 4 || v.tokens_[0] != kPad || v.tokens_[1] != kBos || v.tokens_[2] != kEos ||
      v.tokens_[3] != kUnk)
    throw FormatError("vocabulary manifest does not start with the special tokens");
  if (static_cast<int64_t>(rows.size()) != v.size() * dim)
    throw FormatError("vocabulary rows hold " + std::to_string(rows.size()) + " values, expected " +
                      std::to_string(v.size() * dim));
  v.dim_ = dim;
  v.frozen_ = frozen;
  v.embedding_ = Tensor::from_values({v.size(), dim}, std::move(rows));
  v.rebuild_masks();
  return v;
}

MultiVocab MultiVocab::load(const std::string& manifest_path, const std::string& matrix_path) {
  std::ifstream manifest(manifest_path);
  if (!manifest) throw DataError("cannot open vocabulary manifest: " + manifest_path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(manifest, line))
    if (!line.empty()) tokens.push_back(line);

  std::ifstream matrix(matrix_path, std::ios::binary);
  if (!matrix) throw DataError("cannot open vocabulary matrix: " + matrix_path);
  char magic[8];
  matrix.read(magic, 8);
  if (matrix.gcount() != 8 || std::string(magic, 8) != "HMTEMB01")
    throw FormatError(matrix_path + ": bad vocabulary matrix magic");
  int64_t rows = 0, cols = 0;
  uint8_t frozen = 1;
  matrix.read(reinterpret_cast<char*>(&rows), 8);
  matrix.read(reinterpret_cast<char*>(&cols), 8);
  matrix.read(reinterpret_cast<char*>(&frozen), 1);
  if (rows != static_cast<int64_t>(tokens.size()))
    throw FormatError(matrix_path + ": matrix rows " + std::to_string(rows) +
                      " disagree with manifest size " + std::to_string(tokens.size()));
  std::vector<real> values(static_cast<size_t>(rows * cols));
  for (auto& val : values) {
    double d;
    matrix.read(reinterpret_cast<char*>(&d), 8);
    if (!matrix) throw FormatError(matrix_path + ": truncated vocabulary matrix");
    val = static_cast<real>(d);
  }
  return from_tokens(tokens, cols, frozen != 0, std::move(values));
}

}  // namespace hubmt
