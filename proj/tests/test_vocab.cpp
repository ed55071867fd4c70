#include "doctest.h"
#include "hubmt/vocab.hpp"

using namespace hubmt;

namespace {

EmbeddingSpace make_space(const std::string& lang, const std::vector<std::string>& words,
                          int64_t dim, uint64_t seed) {
  EmbeddingSpace space(lang, dim);
  Rng rng(seed);
  for (const auto& w : words) {
    EVec v(dim);
    for (int64_t c = 0; c < dim; ++c) v[c] = rng.normal();
    space.add_word(w, v);
  }
  space.build_ngram_bank();
  return space;
}

}  // namespace

TEST_CASE("build_vocab: shared surface words get distinct prefixed tokens") {
  auto fr = make_space("fr", {"chat", "noir"}, 4, 1);
  auto en = make_space("en", {"chat", "cat"}, 4, 2);
  MultiVocab::Sentences fr_corpus{{"chat", "noir"}};
  MultiVocab::Sentences en_corpus{{"chat", "cat"}};
  auto v = MultiVocab::build({{"fr", &fr_corpus}, {"en", &en_corpus}},
                             {{"fr", &fr}, {"en", &en}});
  CHECK(v.id_of("fr@chat").has_value());
  CHECK(v.id_of("en@chat").has_value());
  CHECK(*v.id_of("fr@chat") != *v.id_of("en@chat"));
  // 4 base specials + 2 tags + 4 words
  CHECK(v.size() == 10);
}

TEST_CASE("build_vocab: size is sum of per-language types plus specials") {
  std::vector<std::string> langs{"aa", "bb", "cc", "dd", "ee"};
  std::vector<EmbeddingSpace> spaces;
  std::vector<MultiVocab::Sentences> corpora;
  Rng rng(3);
  int64_t expected_words = 0;
  for (size_t i = 0; i < langs.size(); ++i) {
    std::vector<std::string> words;
    int64_t n = 3 + static_cast<int64_t>(rng.uniform_int(5));
    for (int64_t j = 0; j < n; ++j) words.push_back("word" + std::to_string(j));
    expected_words += n;
    spaces.push_back(make_space(langs[i], words, 4, 10 + i));
    MultiVocab::Sentences sentences;
    sentences.push_back(words);
    sentences.push_back(words);  // duplicate sentence: types still counted once
    corpora.push_back(sentences);
  }
  std::vector<std::pair<std::string, const MultiVocab::Sentences*>> inputs;
  std::map<std::string, const EmbeddingSpace*> space_map;
  for (size_t i = 0; i < langs.size(); ++i) {
    inputs.emplace_back(langs[i], &corpora[i]);
    space_map[langs[i]] = &spaces[i];
  }
  auto v = MultiVocab::build(inputs, space_map);
  CHECK(v.size() == expected_words + 4 + static_cast<int64_t>(langs.size()));
}

TEST_CASE("build_vocab: language without space is a config error") {
  MultiVocab::Sentences corpus{{"a"}};
  CHECK_THROWS_AS(MultiVocab::build({{"xx", &corpus}}, {}), ConfigError);
}

TEST_CASE("lang_mask: disjointness, partition, specials everywhere") {
  auto aa = make_space("aa", {"x", "y"}, 4, 4);
  auto bb = make_space("bb", {"x", "z", "w"}, 4, 5);
  MultiVocab::Sentences ca{{"x", "y"}};
  MultiVocab::Sentences cb{{"x", "z", "w"}};
  auto v = MultiVocab::build({{"aa", &ca}, {"bb", &cb}}, {{"aa", &aa}, {"bb", &bb}});

  const auto& ma = v.lang_mask("aa");
  const auto& mb = v.lang_mask("bb");
  int64_t non_special_total = 0;
  int64_t sum_mask_popcount = 0;
  for (int32_t id = 0; id < v.size(); ++id) {
    if (v.is_special(id)) {
      CHECK(ma[static_cast<size_t>(id)] == 1);
      CHECK(mb[static_cast<size_t>(id)] == 1);
    } else {
      CHECK((ma[static_cast<size_t>(id)] & mb[static_cast<size_t>(id)]) == 0);
      ++non_special_total;
      sum_mask_popcount += ma[static_cast<size_t>(id)] + mb[static_cast<size_t>(id)];
    }
  }
  CHECK(sum_mask_popcount == non_special_total);
  CHECK_THROWS_AS(v.lang_mask("zz"), ConfigError);
}

TEST_CASE("extend_vocab: id stability, contiguous tail, frozen requirement") {
  auto aa = make_space("aa", {"x", "y"}, 4, 6);
  auto pt = make_space("pt", {"casa", "gato"}, 4, 7);
  MultiVocab::Sentences ca{{"x", "y"}};
  auto v = MultiVocab::build({{"aa", &ca}}, {{"aa", &aa}});

  std::vector<std::string> before = v.tokens();
  std::vector<real> rows_before = v.embedding().values();

  MultiVocab::Sentences pt_corpus{{"casa", "gato"}, {"gato"}};
  auto v2 = v.extend("pt", pt_corpus, pt);

  for (size_t i = 0; i < before.size(); ++i) CHECK(v2.tokens()[i] == before[i]);
  for (size_t i = 0; i < rows_before.size(); ++i) CHECK(v2.embedding().values()[i] == rows_before[i]);
  CHECK(v2.id_of("pt@casa").has_value());
  CHECK(*v2.id_of("pt@casa") == v.size() + 1);  // tag first, then words
  CHECK(*v2.id_of("pt@gato") == v.size() + 2);
  CHECK(v2.has_language("pt"));
  CHECK(v2.lang_mask("pt").size() == static_cast<size_t>(v2.size()));

  // empty extension: only the tag token and an all-specials mask appear
  auto ru = make_space("ru", {}, 4, 8);
  MultiVocab::Sentences empty_corpus;
  auto v3 = v.extend("ru", empty_corpus, ru);
  CHECK(v3.size() == v.size() + 1);
  int64_t non_special_true = 0;
  for (int32_t id = 0; id < v3.size(); ++id)
    if (!v3.is_special(id) && v3.lang_mask("ru")[static_cast<size_t>(id)]) ++non_special_true;
  CHECK(non_special_true == 0);

  // extension requires frozen embeddings
  MultiVocab thawed = v;
  thawed.set_frozen(false);
  try {
    thawed.extend("pt", pt_corpus, pt);
    FAIL("expected ContractError");
  } catch (const ContractError& e) {
    CHECK(std::string(e.what()).find("frozen") != std::string::npos);
  }
}

TEST_CASE("token round trip and @-escaping") {
  auto aa = make_space("aa", {"a@b", "plain"}, 4, 9);
  MultiVocab::Sentences ca{{"a@b", "plain"}};
  auto v = MultiVocab::build({{"aa", &ca}}, {{"aa", &aa}});
  for (int32_t id = 0; id < v.size(); ++id) {
    auto round = v.id_of(v.token(id));
    REQUIRE(round.has_value());
    CHECK(*round == id);
  }
  int32_t id = v.word_id("aa", "a@b");
  CHECK(id != v.unk_id());
  CHECK(v.surface(id) == "a@b");
  CHECK(v.lang_of(id) == "aa");
}

TEST_CASE("hub coherence: vocabulary rows preserve aligned-space cosines") {
  auto aa = make_space("aa", {"x", "y", "z"}, 8, 10);
  MultiVocab::Sentences ca{{"x", "y", "z"}};
  auto v = MultiVocab::build({{"aa", &ca}}, {{"aa", &aa}});
  int64_t d = v.dim();
  auto row = [&](int32_t id) {
    EVec out(d);
    for (int64_t c = 0; c < d; ++c) out[c] = v.embedding().values()[static_cast<size_t>(id * d + c)];
    return out;
  };
  EVec rx = row(v.word_id("aa", "x")), ry = row(v.word_id("aa", "y"));
  EVec sx = aa.lookup("x"), sy = aa.lookup("y");
  real cv = rx.dot(ry) / (rx.norm() * ry.norm());
  real cs = sx.dot(sy) / (sx.norm() * sy.norm());
  CHECK(std::abs(cv - cs) < 1e-6);
}

TEST_CASE("vocabulary manifest + matrix round trip") {
  auto aa = make_space("aa", {"x", "y"}, 4, 11);
  auto bb = make_space("bb", {"q"}, 4, 12);
  MultiVocab::Sentences ca{{"x", "y"}};
  MultiVocab::Sentences cb{{"q"}};
  auto v = MultiVocab::build({{"aa", &ca}, {"bb", &cb}}, {{"aa", &aa}, {"bb", &bb}});
  v.save("/tmp/hubmt_vocab_manifest.txt", "/tmp/hubmt_vocab_rows.bin");
  auto loaded = MultiVocab::load("/tmp/hubmt_vocab_manifest.txt", "/tmp/hubmt_vocab_rows.bin");
  CHECK(loaded.size() == v.size());
  CHECK(loaded.tokens() == v.tokens());
  CHECK(loaded.embedding().values() == v.embedding().values());
  CHECK(loaded.frozen() == v.frozen());
  CHECK(loaded.languages() == v.languages());
  CHECK(loaded.tag_id("bb") == v.tag_id("bb"));
  CHECK(loaded.lang_mask("aa") == v.lang_mask("aa"));
}

TEST_CASE("embedding freeze mask covers exactly the word rows") {
  auto aa = make_space("aa", {"x"}, 4, 13);
  MultiVocab::Sentences ca{{"x"}};
  auto v = MultiVocab::build({{"aa", &ca}}, {{"aa", &aa}});
  auto mask = v.make_embedding_freeze_mask();
  for (int32_t id = 0; id < v.size(); ++id)
    for (int64_t c = 0; c < v.dim(); ++c)
      CHECK((*mask)[static_cast<size_t>(id * v.dim() + c)] == (v.is_special(id) ? 0 : 1));
}
