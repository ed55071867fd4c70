#include "hubmt/batching.hpp"

#include <algorithm>
#include <numeric>

namespace hubmt {

std::vector<int32_t> source_ids(const MultiVocab& vocab, const std::vector<std::string>& words,
                                const std::string& src_lang, const std::string& tgt_lang) {
  std::vector<int32_t> ids;
  ids.reserve(words.size() + 2);
  ids.push_back(vocab.tag_id(tgt_lang));
  for (const auto& w : words) ids.push_back(vocab.word_id(src_lang, w));
  ids.push_back(vocab.eos_id());
  return ids;
}

BatchPlan make_batches(const ParallelCorpus& corpus, const MultiVocab& vocab, int64_t budget,
                       uint64_t seed) {
  for (const auto& p : corpus.pairs) {
    if (!vocab.has_language(p.src_lang))
      throw ConfigError("make_batches: unknown source language: " + p.src_lang);
    if (!vocab.has_language(p.tgt_lang))
      throw ConfigError("make_batches: unknown target language: " + p.tgt_lang);
  }

  struct Item {
    int64_t index;
    int64_t src_len;  // incl tag + eos
    int64_t tgt_len;  // incl eos
  };
  BatchPlan plan;
  std::vector<Item> items;
  items.reserve(corpus.pairs.size());
  for (size_t i = 0; i < corpus.pairs.size(); ++i) {
    const auto& p = corpus.pairs[i];
    int64_t sl = static_cast<int64_t>(p.src.size()) + 2;
    int64_t tl = static_cast<int64_t>(p.tgt.size()) + 1;
    if (std::max(sl, tl) > budget) {
      ++plan.skipped;
      continue;
    }
    items.push_back({static_cast<int64_t>(i), sl, tl});
  }

  // Shuffle, then bucket by source length (10-token buckets). The shuffle
  // decides the order within a bucket; bucketing keeps padding waste down.
  Rng rng(seed);
  for (size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[rng.uniform_int(i)]);
  std::stable_sort(items.begin(), items.end(),
                   [](const Item& a, const Item& b) { return a.src_len / 10 < b.src_len / 10; });

  // Greedy fill under the padded-token budget.
  std::vector<std::vector<Item>> groups;
  std::vector<Item> current;
  int64_t cur_src = 0, cur_tgt = 0;
  for (const auto& it : items) {
    int64_t ns = std::max(cur_src, it.src_len);
    int64_t nt = std::max(cur_tgt, it.tgt_len);
    int64_t padded = static_cast<int64_t>(current.size() + 1) * std::max(ns, nt);
    if (!current.empty() && padded > budget) {
      groups.push_back(std::move(current));
      current.clear();
      cur_src = cur_tgt = 0;
      ns = it.src_len;
      nt = it.tgt_len;
    }
    current.push_back(it);
    cur_src = ns;
    cur_tgt = nt;
  }
  if (!current.empty()) groups.push_back(std::move(current));

  // Shuffle batch order so an epoch is not sorted by length.
  for (size_t i = groups.size(); i > 1; --i) std::swap(groups[i - 1], groups[rng.uniform_int(i)]);

  for (const auto& group : groups) {
    Batch b;
    b.rows = static_cast<int64_t>(group.size());
    for (const auto& it : group) {
      b.src_len = std::max(b.src_len, it.src_len);
      b.tgt_len = std::max(b.tgt_len, it.tgt_len);
    }
    b.src.assign(static_cast<size_t>(b.rows * b.src_len), vocab.pad_id());
    b.tgt_in.assign(static_cast<size_t>(b.rows * b.tgt_len), vocab.pad_id());
    b.tgt_out.assign(static_cast<size_t>(b.rows * b.tgt_len), vocab.pad_id());
    b.tgt_include.assign(static_cast<size_t>(b.rows * b.tgt_len), 0);
    for (int64_t r = 0; r < b.rows; ++r) {
      const auto& p = corpus.pairs[static_cast<size_t>(group[static_cast<size_t>(r)].index)];
      auto sids = source_ids(vocab, p.src, p.src_lang, p.tgt_lang);
      b.src_lengths.push_back(static_cast<int32_t>(sids.size()));
      for (size_t c = 0; c < sids.size(); ++c) b.src[static_cast<size_t>(r * b.src_len) + c] = sids[c];

      b.tgt_lengths.push_back(static_cast<int32_t>(p.tgt.size()) + 1);
      b.tgt_in[static_cast<size_t>(r * b.tgt_len)] = vocab.bos_id();
      for (size_t c = 0; c < p.tgt.size(); ++c) {
        int32_t id = vocab.word_id(p.tgt_lang, p.tgt[c]);
        if (c + 1 < static_cast<size_t>(b.tgt_len)) b.tgt_in[static_cast<size_t>(r * b.tgt_len) + c + 1] = id;
        b.tgt_out[static_cast<size_t>(r * b.tgt_len) + c] = id;
        b.tgt_include[static_cast<size_t>(r * b.tgt_len) + c] = 1;
      }
      b.tgt_out[static_cast<size_t>(r * b.tgt_len) + p.tgt.size()] = vocab.eos_id();
      b.tgt_include[static_cast<size_t>(r * b.tgt_len) + p.tgt.size()] = 1;
    }
    plan.batches.push_back(std::move(b));
  }
  return plan;
}

}  // namespace hubmt
