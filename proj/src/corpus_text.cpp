#include "hubmt/corpus_text.hpp"

#include <fstream>

namespace hubmt {

namespace {

bool is_word_byte(unsigned char c) {
  if (c >= 0x80) return true;  // UTF-8 multibyte: keep with the word
  return (c >= '0' && c <= '9') || (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z');
}

bool is_space_byte(unsigned char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v'; }

}  // namespace

std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : line) {
    if (is_space_byte(c)) {
      if (!current.empty()) {
        tokens.push_back(current);
        current.clear();
      }
    } else if (is_word_byte(c)) {
      current.push_back(static_cast<char>(c));
    } else {
      if (!current.empty()) {
        tokens.push_back(current);
        current.clear();
      }
      tokens.push_back(std::string(1, static_cast<char>(c)));
    }
  }
  if (!current.empty()) tokens.push_back(current);
  return tokens;
}

std::string detokenize(const std::vector<std::string>& tokens) {
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

std::string ascii_lower(const std::string& word) {
  std::string out = word;
  for (char& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

void Truecaser::fit(const std::vector<std::vector<std::string>>& sentences) {
  for (const auto& sent : sentences) {
    for (size_t i = 0; i < sent.size(); ++i) {
      auto& table = (i == 0) ? initial_only_ : stats_;
      table[ascii_lower(sent[i])][sent[i]] += 1;
    }
  }
}

std::vector<std::string> Truecaser::apply(const std::vector<std::string>& tokens) const {
  if (tokens.empty()) return tokens;
  std::vector<std::string> out = tokens;
  std::string key = ascii_lower(out[0]);

  const std::map<std::string, int64_t>* forms = nullptr;
  auto it = stats_.find(key);
  if (it != stats_.end())
    forms = &it->second;
  else {
    auto it2 = initial_only_.find(key);
    if (it2 != initial_only_.end()) forms = &it2->second;
  }
  if (!forms) return out;

  // Lower only when the lowercase form is the strict majority; ties keep the
  // sentence as written.
  int64_t lower_count = 0;
  auto lc = forms->find(key);
  if (lc != forms->end()) lower_count = lc->second;
  for (const auto& [form, count] : *forms)
    if (form != key && count >= lower_count) return out;
  if (lower_count > 0) out[0] = key;
  return out;
}

void ParallelCorpus::append(const ParallelCorpus& other) {
  pairs.insert(pairs.end(), other.pairs.begin(), other.pairs.end());
  skipped += other.skipped;
}

ParallelCorpus ParallelCorpus::load(const std::string& src_path, const std::string& tgt_path,
                                    const std::string& src_lang, const std::string& tgt_lang,
                                    int64_t max_len) {
  std::ifstream src_in(src_path), tgt_in(tgt_path);
  if (!src_in) throw DataError("cannot open corpus file: " + src_path);
  if (!tgt_in) throw DataError("cannot open corpus file: " + tgt_path);
  ParallelCorpus corpus;
  std::string src_line, tgt_line;
  while (true) {
    bool s_ok = static_cast<bool>(std::getline(src_in, src_line));
    bool t_ok = static_cast<bool>(std::getline(tgt_in, tgt_line));
    if (!s_ok && !t_ok) break;
    if (s_ok != t_ok)
      throw DataError("parallel files disagree in length: " + src_path + " vs " + tgt_path);
    auto src_toks = tokenize(src_line);
    auto tgt_toks = tokenize(tgt_line);
    if (src_toks.empty() || tgt_toks.empty() ||
        static_cast<int64_t>(src_toks.size()) > max_len ||
        static_cast<int64_t>(tgt_toks.size()) > max_len) {
      ++corpus.skipped;
      continue;
    }
    corpus.pairs.push_back({std::move(src_toks), std::move(tgt_toks), src_lang, tgt_lang});
  }
  return corpus;
}

MonoCorpus MonoCorpus::load(const std::string& path, const std::string& lang, int64_t max_len) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file: " + path);
  MonoCorpus corpus;
  corpus.lang = lang;
  std::string line;
  while (std::getline(in, line)) {
    auto toks = tokenize(line);
    if (toks.empty() || static_cast<int64_t>(toks.size()) > max_len) {
      ++corpus.skipped;
      continue;
    }
    corpus.sentences.push_back(std::move(toks));
  }
  return corpus;
}

}  // namespace hubmt
