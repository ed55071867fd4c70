#include "hubmt/decode.hpp"

#include <algorithm>
#include <cstdlib>
#include <limits>
#include <thread>

namespace hubmt {

namespace {

std::atomic<int64_t> g_offtarget_count{0};

real length_penalty(int64_t len, real alpha) {
  return std::pow((real(5) + static_cast<real>(len)) / real(6), alpha);
}

struct MaskedScores {
  std::vector<real> scores;
};

void apply_target_mask(std::vector<real>& scores, const MultiVocab& v,
                       const std::vector<uint8_t>& mask) {
  const real neg_inf = -std::numeric_limits<real>::infinity();
  for (size_t id = 0; id < scores.size(); ++id)
    if (!mask[id]) scores[id] = neg_inf;
  // pad and bos are structural symbols, never valid emissions
  scores[static_cast<size_t>(v.pad_id())] = neg_inf;
  scores[static_cast<size_t>(v.bos_id())] = neg_inf;
}

std::vector<std::string> strip_to_surface(const std::vector<int32_t>& ids, const MultiVocab& v,
                                          const std::string& target_lang) {
  std::vector<std::string> out;
  for (int32_t id : ids) {
    if (v.is_special(id)) continue;
    if (v.lang_of(id) != target_lang) g_offtarget_count.fetch_add(1);
    out.push_back(v.surface(id));
  }
  return out;
}

}  // namespace

int64_t offtarget_emission_count() { return g_offtarget_count.load(); }
void reset_offtarget_emission_count() { g_offtarget_count.store(0); }

std::vector<std::string> collapse_duplicates(const std::vector<std::string>& tokens) {
  std::vector<std::string> out;
  for (const auto& t : tokens)
    if (out.empty() || out.back() != t) out.push_back(t);
  return out;
}

int32_t continuous_decode_step(const EVec& predicted, const MultiVocab& v,
                               const std::string& target_lang) {
  const auto& mask = v.lang_mask(target_lang);  // ConfigError on unknown language
  const auto& rows = v.embedding().values();
  int64_t d = v.dim();
  real pn = predicted.norm();
  if (pn < real(1e-12)) pn = 1;

  int32_t best = -1;
  real best_cos = -2;
  for (int32_t id = 0; id < v.size(); ++id) {
    bool candidate = (!v.is_special(id) && mask[static_cast<size_t>(id)]) || id == v.eos_id();
    if (!candidate) continue;
    real dot = 0, nrm = 0;
    const real* row = rows.data() + static_cast<size_t>(id) * d;
    for (int64_t c = 0; c < d; ++c) {
      dot += row[c] * predicted[c];
      nrm += row[c] * row[c];
    }
    nrm = std::sqrt(nrm);
    if (nrm < real(1e-12)) continue;
    real cos = dot / (nrm * pn);
    if (cos > best_cos) {  // strict: ties keep the lowest id
      best_cos = cos;
      best = id;
    }
  }
  if (best < 0) throw ConfigError("continuous_decode_step: no candidate rows for language " + target_lang);
  return best;
}

std::vector<int32_t> decode_ids(const TranslationModel& m, const EncoderStates& enc,
                                const DecodeConfig& cfg, int64_t src_len_hint) {
  const MultiVocab& v = m.vocab();
  if (!v.has_language(cfg.target_lang))
    throw ConfigError("decode: unknown target language: " + cfg.target_lang);
  if (cfg.beam_size < 1) throw ConfigError("decode: beam_size must be >= 1");
  const auto& mask = v.lang_mask(cfg.target_lang);
  int64_t max_len = cfg.max_len > 0 ? cfg.max_len : 2 * src_len_hint + 10;
  if (max_len < 1) max_len = 1;

  NoGradGuard guard;

  if (m.config().head_kind == HeadKind::continuous) {
    // Nearest-neighbor decoding has no distribution to branch on; the search
    // is greedy regardless of beam_size.
    std::vector<int32_t> prefix{v.bos_id()};
    std::vector<int32_t> out;
    for (int64_t step = 0; step < max_len; ++step) {
      EVec predicted = m.decode_step_vector(enc, prefix);
      int32_t id = continuous_decode_step(predicted, v, cfg.target_lang);
      if (id == v.eos_id()) break;
      out.push_back(id);
      prefix.push_back(id);
    }
    return out;
  }

  struct Beam {
    std::vector<int32_t> ids;
    real score;
  };
  std::vector<Beam> alive{{{v.bos_id()}, 0}};
  std::vector<Beam> finished;

  for (int64_t step = 0; step < max_len && !alive.empty(); ++step) {
    struct Cand {
      size_t beam;
      int32_t id;
      real score;
    };
    std::vector<Cand> cands;
    for (size_t b = 0; b < alive.size(); ++b) {
      auto scores = m.decode_step_logprobs(enc, alive[b].ids);
      apply_target_mask(scores, v, mask);
      if (cfg.beam_size == 1) {
        int32_t best = 0;
        real best_score = -std::numeric_limits<real>::infinity();
        for (size_t id = 0; id < scores.size(); ++id)
          if (scores[id] > best_score) {
            best_score = scores[id];
            best = static_cast<int32_t>(id);
          }
        cands.push_back({b, best, alive[b].score + best_score});
      } else {
        for (size_t id = 0; id < scores.size(); ++id) {
          if (scores[id] == -std::numeric_limits<real>::infinity()) continue;
          cands.push_back({b, static_cast<int32_t>(id), alive[b].score + scores[id]});
        }
      }
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.id != b.id) return a.id < b.id;
      return a.beam < b.beam;
    });

    std::vector<Beam> next;
    for (const auto& c : cands) {
      if (static_cast<int>(next.size()) >= cfg.beam_size &&
          static_cast<int>(finished.size()) >= cfg.beam_size)
        break;
      Beam nb;
      nb.ids = alive[c.beam].ids;
      nb.ids.push_back(c.id);
      nb.score = c.score;
      if (c.id == v.eos_id()) {
        if (static_cast<int>(finished.size()) < cfg.beam_size * 2) finished.push_back(std::move(nb));
      } else if (static_cast<int>(next.size()) < cfg.beam_size) {
        next.push_back(std::move(nb));
      }
    }
    alive = std::move(next);
  }

  // Rank finished and still-alive hypotheses by length-normalized score.
  auto norm_score = [&](const Beam& b) {
    int64_t gen = static_cast<int64_t>(b.ids.size()) - 1;  // minus <bos>
    return b.score / length_penalty(std::max<int64_t>(gen, 1), cfg.length_norm);
  };
  const Beam* best = nullptr;
  real best_norm = -std::numeric_limits<real>::infinity();
  for (const auto* pool : {&finished, &alive}) {
    for (const auto& b : *pool) {
      real ns = norm_score(b);
      if (ns > best_norm) {
        best_norm = ns;
        best = &b;
      }
    }
  }
  if (!best) return {};
  std::vector<int32_t> out(best->ids.begin() + 1, best->ids.end());
  if (!out.empty() && out.back() == v.eos_id()) out.pop_back();
  return out;
}

namespace {

std::vector<std::string> finish_surface(const std::vector<int32_t>& ids, const MultiVocab& v,
                                        const DecodeConfig& cfg) {
  auto tokens = strip_to_surface(ids, v, cfg.target_lang);
  if (cfg.collapse_duplicates) tokens = collapse_duplicates(tokens);
  return tokens;
}

}  // namespace

std::vector<std::string> decode(const TranslationModel& m, const std::vector<std::string>& src_tokens,
                                const std::string& src_lang, const DecodeConfig& cfg) {
  const MultiVocab& v = m.vocab();
  if (!v.has_language(src_lang)) throw ConfigError("decode: unknown source language: " + src_lang);
  if (!v.has_language(cfg.target_lang))
    throw ConfigError("decode: unknown target language: " + cfg.target_lang);
  auto ids = source_ids(v, src_tokens, src_lang, cfg.target_lang);
  NoGradGuard guard;
  auto enc = m.encode_sentence(ids);
  auto out = decode_ids(m, enc, cfg, static_cast<int64_t>(src_tokens.size()));
  return finish_surface(out, v, cfg);
}

std::vector<std::string> blind_decode(const TranslationModel& m, const EmbeddingSpace& src_space,
                                      const std::vector<std::string>& src_tokens,
                                      const std::string& src_lang, const DecodeConfig& cfg) {
  const MultiVocab& v = m.vocab();
  if (!v.has_language(src_lang))
    throw ConfigError("blind_decode: vocabulary was never extended by language '" + src_lang +
                      "'; align its embedding space and extend the vocabulary first");
  if (!src_space.has_transform())
    throw ConfigError("blind_decode: embedding space for '" + src_lang +
                      "' carries no alignment transform into the hub; run the align step first "
                      "(the pivot uses the identity)");

  NoGradGuard guard;
  int64_t d = v.dim();
  int64_t len = static_cast<int64_t>(src_tokens.size()) + 2;
  Tensor rows = Tensor::zeros({len, d});
  auto put_row = [&](int64_t r, const real* src) {
    std::copy_n(src, d, rows.values().begin() + static_cast<size_t>(r * d));
  };
  put_row(0, v.embedding().values().data() + static_cast<size_t>(v.tag_id(cfg.target_lang)) * d);
  for (size_t i = 0; i < src_tokens.size(); ++i) {
    auto id = v.id_of(MultiVocab::make_token(src_lang, src_tokens[i]));
    if (id) {
      put_row(static_cast<int64_t>(i + 1), v.embedding().values().data() + static_cast<size_t>(*id) * d);
    } else {
      EVec vec = src_space.lookup(src_tokens[i]);  // subword fallback, hub-aligned
      put_row(static_cast<int64_t>(i + 1), vec.data());
    }
  }
  put_row(len - 1, v.embedding().values().data() + static_cast<size_t>(v.eos_id()) * d);

  auto enc = m.encode_embedded(rows, {static_cast<int32_t>(len)}, 1, len);
  auto out = decode_ids(m, enc, cfg, static_cast<int64_t>(src_tokens.size()));
  return finish_surface(out, v, cfg);
}

int decode_thread_count(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("HUBMT_THREADS")) {
    int n = std::atoi(env);
    if (n > 0) return n;
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

namespace {

template <typename DecodeOne>
std::vector<std::vector<std::string>> parallel_map(
    const std::vector<std::vector<std::string>>& sentences, int threads, DecodeOne&& fn) {
  std::vector<std::vector<std::string>> out(sentences.size());
  int n = decode_thread_count(threads);
  if (n <= 1 || sentences.size() < 2) {
    for (size_t i = 0; i < sentences.size(); ++i) out[i] = fn(sentences[i]);
    return out;
  }
  std::atomic<size_t> next{0};
  std::vector<std::thread> workers;
  for (int t = 0; t < n; ++t)
    workers.emplace_back([&] {
      for (size_t i = next.fetch_add(1); i < sentences.size(); i = next.fetch_add(1))
        out[i] = fn(sentences[i]);
    });
  for (auto& w : workers) w.join();
  return out;
}

}  // namespace

std::vector<std::vector<std::string>> decode_corpus(
    const TranslationModel& m, const std::vector<std::vector<std::string>>& sentences,
    const std::string& src_lang, const DecodeConfig& cfg, int threads) {
  return parallel_map(sentences, threads,
                      [&](const std::vector<std::string>& s) { return decode(m, s, src_lang, cfg); });
}

std::vector<std::vector<std::string>> blind_decode_corpus(
    const TranslationModel& m, const EmbeddingSpace& src_space,
    const std::vector<std::vector<std::string>>& sentences, const std::string& src_lang,
    const DecodeConfig& cfg, int threads) {
  return parallel_map(sentences, threads, [&](const std::vector<std::string>& s) {
    return blind_decode(m, src_space, s, src_lang, cfg);
  });
}

}  // namespace hubmt
