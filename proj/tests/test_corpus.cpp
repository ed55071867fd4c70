#include <fstream>
#include <map>
#include <set>

#include "doctest.h"
#include "hubmt/batching.hpp"
#include "hubmt/corpus_text.hpp"
#include "hubmt/vocab.hpp"

using namespace hubmt;

TEST_CASE("tokenize: punctuation splits, empty line, round trip") {
  auto toks = tokenize("Hello, world!");
  REQUIRE(toks.size() == 4);
  CHECK(toks[0] == "Hello");
  CHECK(toks[1] == ",");
  CHECK(toks[2] == "world");
  CHECK(toks[3] == "!");

  CHECK(tokenize("").empty());
  CHECK(tokenize("   \t ").empty());

  // detokenize(tokenize(x)) re-tokenizes to the same sequence
  for (const std::string& line :
       {std::string("A sample sentence."), std::string("He said: \"no way, really?!\""),
        std::string("C'est l'été — déjà!"), std::string("numbers 12,345.67 and x2")}) {
    auto t1 = tokenize(line);
    auto t2 = tokenize(detokenize(t1));
    CHECK(t1 == t2);
  }
}

TEST_CASE("truecase: frequent-word lowering, proper nouns preserved, counting oracle") {
  std::vector<std::vector<std::string>> corpus = {
      {"The", "cat", "sat"},          {"I", "saw", "the", "cat"},
      {"Portugal", "is", "warm"},     {"we", "love", "Portugal"},
      {"the", "dog", "and", "the", "cat"}, {"cats", "chase", "the", "dog"},
      {"He", "visited", "Portugal"},  {"dogs", "bark"},
      {"The", "dog", "barks"},        {"a", "cat", "and", "a", "dog"},
  };
  Truecaser tc;
  tc.fit(corpus);

  auto lowered = tc.apply({"The", "cat"});
  CHECK(lowered[0] == "the");
  auto kept = tc.apply({"Portugal", "é"});
  CHECK(kept[0] == "Portugal");

  // brute-force majority count over non-initial positions must agree
  std::map<std::string, std::map<std::string, int64_t>> counts;
  for (const auto& sent : corpus)
    for (size_t i = 1; i < sent.size(); ++i) counts[ascii_lower(sent[i])][sent[i]] += 1;
  for (const auto& [key, forms] : counts) {
    std::string best;
    int64_t best_count = -1;
    bool tie = false;
    for (const auto& [form, c] : forms) {
      if (c > best_count) {
        best = form;
        best_count = c;
        tie = false;
      } else if (c == best_count) {
        tie = true;
      }
    }
    std::string first_upper = key;
    if (!first_upper.empty() && first_upper[0] >= 'a' && first_upper[0] <= 'z')
      first_upper[0] = static_cast<char>(first_upper[0] - 'a' + 'A');
    auto out = tc.apply({first_upper, "tail"});
    if (!tie && best == key)
      CHECK(out[0] == key);
    else
      CHECK(out[0] == first_upper);
  }
}

namespace {

EmbeddingSpace tiny_space(const std::string& lang, const std::vector<std::string>& words) {
  EmbeddingSpace space(lang, 4);
  Rng rng(lang.size() * 77 + 5);
  for (const auto& w : words) {
    EVec v(4);
    for (int c = 0; c < 4; ++c) v[c] = rng.normal();
    space.add_word(w, v);
  }
  space.build_ngram_bank();
  return space;
}

ParallelCorpus toy_corpus(int n) {
  ParallelCorpus corpus;
  Rng rng(17);
  for (int i = 0; i < n; ++i) {
    int len = 2 + static_cast<int>(rng.uniform_int(6));
    std::vector<std::string> src, tgt;
    for (int j = 0; j < len; ++j) {
      src.push_back("s" + std::to_string(rng.uniform_int(10)));
      tgt.push_back("t" + std::to_string(rng.uniform_int(10)));
    }
    corpus.pairs.push_back({src, tgt, "aa", "bb"});
  }
  return corpus;
}

MultiVocab toy_vocab() {
  static std::vector<std::string> words_a, words_b;
  if (words_a.empty())
    for (int i = 0; i < 10; ++i) {
      words_a.push_back("s" + std::to_string(i));
      words_b.push_back("t" + std::to_string(i));
    }
  static auto sa = tiny_space("aa", words_a);
  static auto sb = tiny_space("bb", words_b);
  static MultiVocab::Sentences ca{words_a}, cb{words_b};
  return MultiVocab::build({{"aa", &ca}, {"bb", &cb}}, {{"aa", &sa}, {"bb", &sb}});
}

}  // namespace

TEST_CASE("make_batches: degenerate budget skips everything with warnings") {
  auto corpus = toy_corpus(20);
  auto vocab = toy_vocab();
  auto plan = make_batches(corpus, vocab, 2, 1);
  CHECK(plan.batches.empty());
  CHECK(plan.skipped == 20);
}

TEST_CASE("make_batches: determinism and epoch multiset coverage") {
  auto corpus = toy_corpus(60);
  auto vocab = toy_vocab();
  auto p1 = make_batches(corpus, vocab, 64, 42);
  auto p2 = make_batches(corpus, vocab, 64, 42);
  REQUIRE(p1.batches.size() == p2.batches.size());
  for (size_t i = 0; i < p1.batches.size(); ++i) {
    CHECK(p1.batches[i].src == p2.batches[i].src);
    CHECK(p1.batches[i].tgt_in == p2.batches[i].tgt_in);
  }
  auto p3 = make_batches(corpus, vocab, 64, 43);
  bool any_diff = p3.batches.size() != p1.batches.size();
  for (size_t i = 0; !any_diff && i < p1.batches.size(); ++i)
    any_diff = p1.batches[i].src != p3.batches[i].src;
  CHECK(any_diff);

  // every pair exactly once per epoch: compare multiset of (src,tgt) id rows
  auto row_multiset = [&](const BatchPlan& plan) {
    std::multiset<std::pair<std::vector<int32_t>, std::vector<int32_t>>> rows;
    for (const auto& b : plan.batches)
      for (int64_t r = 0; r < b.rows; ++r) {
        std::vector<int32_t> s(b.src.begin() + r * b.src_len,
                               b.src.begin() + r * b.src_len + b.src_lengths[static_cast<size_t>(r)]);
        std::vector<int32_t> t(b.tgt_out.begin() + r * b.tgt_len,
                               b.tgt_out.begin() + r * b.tgt_len + b.tgt_lengths[static_cast<size_t>(r)]);
        rows.insert({s, t});
      }
    return rows;
  };
  std::multiset<std::pair<std::vector<int32_t>, std::vector<int32_t>>> expected;
  for (const auto& p : corpus.pairs) {
    std::vector<int32_t> s = source_ids(vocab, p.src, p.src_lang, p.tgt_lang);
    std::vector<int32_t> t;
    for (const auto& w : p.tgt) t.push_back(vocab.word_id(p.tgt_lang, w));
    t.push_back(vocab.eos_id());
    expected.insert({s, t});
  }
  CHECK(row_multiset(p1) == expected);
  CHECK(row_multiset(p3) == expected);
}

TEST_CASE("make_batches: budget respected; source rows carry the declared language") {
  auto corpus = toy_corpus(60);
  auto vocab = toy_vocab();
  auto plan = make_batches(corpus, vocab, 32, 7);
  CHECK(plan.batches.size() > 1);
  for (const auto& b : plan.batches) {
    CHECK(b.padded_tokens() <= 32);
    for (int64_t r = 0; r < b.rows; ++r)
      for (int64_t c = 0; c < b.src_lengths[static_cast<size_t>(r)]; ++c) {
        int32_t id = b.src[static_cast<size_t>(r * b.src_len + c)];
        if (!vocab.is_special(id)) CHECK(vocab.lang_of(id) == "aa");
      }
  }
}

TEST_CASE("corpus loading: empty sides dropped, lengths filtered, mismatch rejected") {
  {
    std::ofstream s("/tmp/hubmt_src.txt"), t("/tmp/hubmt_tgt.txt");
    s << "a b c\n\nlong line here\nx\n";
    t << "un deux\nzz\ntrois\ny\n";
  }
  auto corpus = ParallelCorpus::load("/tmp/hubmt_src.txt", "/tmp/hubmt_tgt.txt", "aa", "bb");
  CHECK(corpus.pairs.size() == 3);  // empty src line dropped
  CHECK(corpus.skipped == 1);
  CHECK(corpus.pairs[0].src_lang == "aa");

  {
    std::ofstream s("/tmp/hubmt_src2.txt"), t("/tmp/hubmt_tgt2.txt");
    s << "a\nb\n";
    t << "x\n";
  }
  CHECK_THROWS_AS(ParallelCorpus::load("/tmp/hubmt_src2.txt", "/tmp/hubmt_tgt2.txt", "aa", "bb"),
                  DataError);

  {
    std::ofstream m("/tmp/hubmt_mono.txt");
    m << "uma frase\n\noutra frase aqui\n";
  }
  auto mono = MonoCorpus::load("/tmp/hubmt_mono.txt", "pt");
  CHECK(mono.sentences.size() == 2);
  CHECK(mono.skipped == 1);
  CHECK(mono.lang == "pt");
}
