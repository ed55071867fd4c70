#include "hubmt/embedding_space.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace hubmt {

EmbeddingSpace::EmbeddingSpace(std::string lang, int64_t dim) : lang_(std::move(lang)), dim_(dim) {
  vectors_.resize(0, dim);
}

std::optional<int32_t> EmbeddingSpace::word_index(const std::string& word) const {
  auto it = index_.find(word);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingSpace::add_word(const std::string& word, const EVec& vector) {
  if (vector.size() != dim_)
    throw DimensionError("add_word: vector of size " + std::to_string(vector.size()) +
                         " into space of dim " + std::to_string(dim_));
  if (index_.count(word)) return;  // first occurrence wins
  real norm = vector.norm();
  index_[word] = static_cast<int32_t>(words_.size());
  words_.push_back(word);
  vectors_.conservativeResize(static_cast<int64_t>(words_.size()), dim_);
  if (norm > real(1e-12))
    vectors_.row(static_cast<int64_t>(words_.size()) - 1) = vector.transpose() / norm;
  else
    vectors_.row(static_cast<int64_t>(words_.size()) - 1).setZero();
}

EmbeddingSpace EmbeddingSpace::load_vec(const std::string& path, const std::string& lang) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vector file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path + ":1: empty vector file");
  std::istringstream header(line);
  int64_t count = -1, dim = -1;
  if (!(header >> count >> dim) || count < 0 || dim <= 0)
    throw FormatError(path + ":1: malformed header, expected \"count dim\"");

  EmbeddingSpace space(lang, dim);
  space.words_.reserve(count);
  // Rows collected first, matrix assembled once; conservativeResize per row
  // would be quadratic.
  std::vector<std::string> words;
  std::vector<real> flat;
  std::unordered_map<std::string, int32_t> seen;
  for (int64_t i = 0; i < count; ++i) {
    if (!std::getline(in, line))
      throw FormatError(path + ":" + std::to_string(i + 2) + ": expected " + std::to_string(count) +
                        " rows, file ended");
    std::istringstream row(line);
    std::string word;
    if (!(row >> word))
      throw FormatError(path + ":" + std::to_string(i + 2) + ": blank vector row");
    std::vector<real> vals;
    vals.reserve(dim);
    real v;
    while (row >> v) vals.push_back(v);
    if (static_cast<int64_t>(vals.size()) != dim)
      throw FormatError(path + ": word '" + word + "' has " + std::to_string(vals.size()) +
                        " values, expected " + std::to_string(dim));
    for (real x : vals)
      if (!std::isfinite(x)) throw FormatError(path + ": word '" + word + "' has non-finite values");
    if (seen.count(word)) continue;  // keep first
    seen[word] = static_cast<int32_t>(words.size());
    words.push_back(word);
    real norm = 0;
    for (real x : vals) norm += x * x;
    norm = std::sqrt(norm);
    for (real x : vals) flat.push_back(norm > real(1e-12) ? x / norm : real(0));
  }
  space.words_ = std::move(words);
  space.index_ = std::move(seen);
  space.vectors_ = Eigen::Map<EMat>(flat.data(), static_cast<int64_t>(space.words_.size()), dim);
  space.build_ngram_bank();
  return space;
}

void EmbeddingSpace::save_vec(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write vector file: " + path);
  out << size() << ' ' << dim_ << '\n';
  char buf[64];
  for (int64_t i = 0; i < size(); ++i) {
    EVec v = has_transform_ ? EVec(transform_ * vectors_.row(i).transpose())
                            : EVec(vectors_.row(i).transpose());
    out << words_[i];
    for (int64_t c = 0; c < dim_; ++c) {
      std::snprintf(buf, sizeof(buf), " %.17g", static_cast<double>(v[c]));
      out << buf;
    }
    out << '\n';
  }
}

uint32_t EmbeddingSpace::ngram_hash(const std::string& gram) {
  // Multiplicative FNV-style byte hash.
  uint32_t h = 2166136261u;
  for (unsigned char c : gram) {
    h ^= c;
    h *= 16777619u;
  }
  return h;
}

std::vector<std::string> char_ngrams(const std::string& word, int nmin, int nmax) {
  std::string marked = "<" + word + ">";
  std::vector<std::string> grams;
  int64_t len = static_cast<int64_t>(marked.size());
  for (int n = nmin; n <= nmax; ++n)
    for (int64_t start = 0; start + n <= len; ++start) grams.push_back(marked.substr(start, n));
  return grams;
}

void EmbeddingSpace::build_ngram_bank() {
  ngram_bank_.clear();
  std::unordered_map<uint32_t, int64_t> counts;
  for (int64_t i = 0; i < size(); ++i) {
    for (const auto& gram : char_ngrams(words_[i], ngram_params_.nmin, ngram_params_.nmax)) {
      uint32_t bucket = ngram_hash(gram) % static_cast<uint32_t>(ngram_params_.buckets);
      auto [it, inserted] = ngram_bank_.try_emplace(bucket, EVec::Zero(dim_));
      it->second += vectors_.row(i).transpose();
      counts[bucket] += 1;
    }
  }
  for (auto& [bucket, vec] : ngram_bank_) vec /= static_cast<real>(counts[bucket]);
}

EVec EmbeddingSpace::oov_vector(const std::string& word) const {
  if (word.empty()) throw ContractError("oov_vector: empty word");
  auto idx = word_index(word);
  if (idx) return vectors_.row(*idx).transpose();
  EVec sum = EVec::Zero(dim_);
  int64_t hits = 0;
  for (const auto& gram : char_ngrams(word, ngram_params_.nmin, ngram_params_.nmax)) {
    uint32_t bucket = ngram_hash(gram) % static_cast<uint32_t>(ngram_params_.buckets);
    auto it = ngram_bank_.find(bucket);
    if (it != ngram_bank_.end()) {
      sum += it->second;
      ++hits;
    }
  }
  if (hits > 0) sum /= static_cast<real>(hits);
  return sum;
}

EVec EmbeddingSpace::lookup(const std::string& word) const {
  EVec raw = oov_vector(word);
  if (!has_transform_) return raw;
  return transform_ * raw;
}

void EmbeddingSpace::set_transform(const EMat& w) {
  if (w.rows() != dim_ || w.cols() != dim_)
    throw DimensionError("set_transform: " + std::to_string(w.rows()) + "x" +
                         std::to_string(w.cols()) + " transform on dim " + std::to_string(dim_));
  transform_ = w;
  has_transform_ = true;
}

}  // namespace hubmt
