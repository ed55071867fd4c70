#pragma once

#include <map>
#include <string>
#include <vector>

#include "hubmt/common.hpp"

namespace hubmt {

// Whitespace + punctuation splitting tokenizer. Runs of letters/digits stay
// together (multibyte UTF-8 sequences count as letters); every other
// non-space character becomes its own token. Reversible up to whitespace.
std::vector<std::string> tokenize(const std::string& line);
std::string detokenize(const std::vector<std::string>& tokens);

// Sentence-initial lowercasing from corpus case statistics: the first token
// is lowered iff its lowercase form is the strict majority surface form.
// Counts come from non-initial positions; words seen only sentence-initially
// fall back to those counts. ASCII-only lowering.
class Truecaser {
 public:
  void fit(const std::vector<std::vector<std::string>>& sentences);
  std::vector<std::string> apply(const std::vector<std::string>& tokens) const;

  const std::map<std::string, std::map<std::string, int64_t>>& stats() const { return stats_; }

 private:
  // lowercase key -> surface form -> count
  std::map<std::string, std::map<std::string, int64_t>> stats_;
  std::map<std::string, std::map<std::string, int64_t>> initial_only_;
};

std::string ascii_lower(const std::string& word);

struct ParallelPair {
  std::vector<std::string> src;
  std::vector<std::string> tgt;
  std::string src_lang;
  std::string tgt_lang;
};

struct ParallelCorpus {
  std::vector<ParallelPair> pairs;
  int64_t skipped = 0;  // dropped at load (empty side / over length cap)

  void append(const ParallelCorpus& other);
  // Two aligned files, one sentence per line, pre-tokenized here.
  static ParallelCorpus load(const std::string& src_path, const std::string& tgt_path,
                             const std::string& src_lang, const std::string& tgt_lang,
                             int64_t max_len = 100);
};

struct MonoCorpus {
  std::string lang;
  std::vector<std::vector<std::string>> sentences;
  int64_t skipped = 0;

  static MonoCorpus load(const std::string& path, const std::string& lang, int64_t max_len = 100);
};

}  // namespace hubmt
