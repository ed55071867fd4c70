#pragma once

#include <map>
#include <string>
#include <vector>

#include "hubmt/align.hpp"
#include "hubmt/corpus_text.hpp"
#include "hubmt/embedding_space.hpp"

namespace hubmt {

// Controlled synthetic language family: one concept inventory, per-language
// bijective relabelings, word-order rules and orthogonal rotations of a
// shared concept embedding space. Parallel corpora are exact translations by
// construction, so method-ordering claims become measurable at desk scale.

enum class WordOrder { identity, swap_pairs, reverse };

struct LanguageSpec {
  std::string name;
  WordOrder order = WordOrder::identity;
  bool identity_relabeling = false;
  bool identity_rotation = false;
  real rotation_noise = 0.0;  // "distant language" knob: jitter on the rotated rows
};

struct FamilySpec {
  int64_t concepts = 500;
  int64_t dim = 32;
  int64_t train_sentences = 3000;  // per language pair and direction source
  int64_t mono_sentences = 1000;   // held-out language
  int64_t dev_sentences = 64;
  int64_t test_sentences = 200;
  int64_t max_len = 12;
  std::vector<LanguageSpec> languages;  // >= 3; the last one is the held-out "new" language
};

struct SyntheticFamily {
  FamilySpec spec;
  std::vector<std::string> base_langs;  // all but the last
  std::string new_lang;

  std::map<std::string, EmbeddingSpace> spaces;  // gold, unaligned
  std::map<std::string, MonoCorpus> mono;        // per language (train split)
  // key "src>tgt"
  std::map<std::string, ParallelCorpus> train;  // base pairs only
  std::map<std::string, ParallelCorpus> dev;    // every pair
  std::map<std::string, ParallelCorpus> test;   // every pair
  // key "src>tgt": full concept bijection dictionaries
  std::map<std::string, BilingualDictionary> dictionaries;

  static std::string key(const std::string& src, const std::string& tgt) { return src + ">" + tgt; }
  const ParallelCorpus& dev_pair(const std::string& s, const std::string& t) const { return dev.at(key(s, t)); }
  const ParallelCorpus& test_pair(const std::string& s, const std::string& t) const { return test.at(key(s, t)); }
};

SyntheticFamily generate_family(const FamilySpec& spec, uint64_t seed);

// Emit the family as ordinary corpus/.vec/dictionary files under dir.
void write_family(const SyntheticFamily& family, const std::string& dir);

}  // namespace hubmt
