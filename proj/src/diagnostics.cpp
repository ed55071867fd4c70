#include "hubmt/diagnostics.hpp"

#include <set>

namespace hubmt {

namespace {

EVec pooled_encoding(const TranslationModel& m, const std::vector<std::string>& tokens,
                     const std::string& lang) {
  auto ids = source_ids(m.vocab(), tokens, lang, lang);
  auto enc = m.encode_sentence(ids);
  int64_t d = m.config().model_dim;
  EVec mean = EVec::Zero(d);
  for (int64_t pos = 0; pos < enc.src_len; ++pos)
    for (int64_t c = 0; c < d; ++c) mean[c] += enc.states.values()[static_cast<size_t>(pos * d + c)];
  mean /= static_cast<real>(enc.src_len);
  return mean;
}

real cosine(const EVec& a, const EVec& b) {
  real na = a.norm(), nb = b.norm();
  if (na < 1e-12 || nb < 1e-12) return 1;  // degenerate constant encoder
  return a.dot(b) / (na * nb);
}

}  // namespace

ReprDiagnostics diagnose_representations(const TranslationModel& m, const ParallelCorpus& dev) {
  std::set<std::string> langs;
  for (const auto& p : dev.pairs) {
    langs.insert(p.src_lang);
    langs.insert(p.tgt_lang);
  }
  if (langs.size() < 2)
    throw ConfigError("diagnose_representations: need parallel data across at least 2 languages");
  if (dev.pairs.empty()) throw ConfigError("diagnose_representations: empty dev corpus");

  NoGradGuard guard;
  ReprDiagnostics out;
  out.pair_count = static_cast<int64_t>(dev.pairs.size());

  std::vector<EVec> src_enc, tgt_enc;
  std::map<std::string, std::vector<EVec>> by_lang;
  for (const auto& p : dev.pairs) {
    src_enc.push_back(pooled_encoding(m, p.src, p.src_lang));
    tgt_enc.push_back(pooled_encoding(m, p.tgt, p.tgt_lang));
    by_lang[p.src_lang].push_back(src_enc.back());
    by_lang[p.tgt_lang].push_back(tgt_enc.back());
  }

  real paired = 0, random_pairs = 0;
  size_t n = dev.pairs.size();
  for (size_t i = 0; i < n; ++i) {
    paired += cosine(src_enc[i], tgt_enc[i]);
    random_pairs += cosine(src_enc[i], tgt_enc[(i + n / 2 + 1) % n]);
  }
  out.paired_cosine = paired / static_cast<real>(n);
  out.random_pair_cosine = random_pairs / static_cast<real>(n);

  for (const auto& [lang, encodings] : by_lang) {
    int64_t d = m.config().model_dim;
    EVec mean = EVec::Zero(d);
    for (const auto& e : encodings) mean += e;
    mean /= static_cast<real>(encodings.size());
    real trace = 0;
    for (const auto& e : encodings) trace += (e - mean).squaredNorm();
    trace /= static_cast<real>(encodings.size());
    out.mean_state[lang] = mean;
    out.variance[lang] = trace;
  }
  return out;
}

}  // namespace hubmt
