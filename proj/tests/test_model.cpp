#include <cmath>

#include "doctest.h"
#include "gradcheck.hpp"
#include "hubmt/model.hpp"

using namespace hubmt;
using hubmt::testing::gradcheck;
using hubmt::testing::random_tensor;

namespace {

EmbeddingSpace words_space(const std::string& lang, int n, int64_t dim, uint64_t seed) {
  EmbeddingSpace space(lang, dim);
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    EVec v(dim);
    for (int64_t c = 0; c < dim; ++c) v[c] = rng.normal();
    space.add_word(lang + "w" + std::to_string(i), v);
  }
  space.build_ngram_bank();
  return space;
}

struct Toy {
  MultiVocab vocab;
  TransformerConfig cfg;
};

Toy toy_setup(int words_per_lang = 10, int64_t dim = 16, int64_t layers = 2, int64_t heads = 2) {
  static std::vector<EmbeddingSpace> keep;
  keep.clear();
  keep.push_back(words_space("aa", words_per_lang, dim, 100));
  keep.push_back(words_space("bb", words_per_lang, dim, 101));
  MultiVocab::Sentences ca, cb;
  std::vector<std::string> wa, wb;
  for (int i = 0; i < words_per_lang; ++i) {
    wa.push_back("aaw" + std::to_string(i));
    wb.push_back("bbw" + std::to_string(i));
  }
  ca.push_back(wa);
  cb.push_back(wb);
  static MultiVocab::Sentences sca, scb;
  sca = ca;
  scb = cb;
  MultiVocab vocab = MultiVocab::build({{"aa", &sca}, {"bb", &scb}},
                                       {{"aa", &keep[0]}, {"bb", &keep[1]}});
  TransformerConfig cfg;
  cfg.layers = layers;
  cfg.model_dim = dim;
  cfg.ff_dim = dim * 4;
  cfg.heads = heads;
  cfg.dropout = 0.0;
  cfg.rel_pos_clip = 4;
  cfg.label_smoothing = 0.1;
  return {std::move(vocab), cfg};
}

std::vector<int32_t> ids_for(const MultiVocab& v, const std::string& lang,
                             const std::vector<int>& word_nums, const std::string& tgt_lang) {
  std::vector<int32_t> ids{v.tag_id(tgt_lang)};
  for (int n : word_nums) ids.push_back(v.word_id(lang, lang + "w" + std::to_string(n)));
  ids.push_back(v.eos_id());
  return ids;
}

}  // namespace

TEST_CASE("encode: eval determinism and batch equivariance") {
  auto [vocab, cfg] = toy_setup();
  TranslationModel model(cfg, vocab, 7);

  auto s1 = ids_for(model.vocab(), "aa", {1, 2, 3}, "bb");
  auto s2 = ids_for(model.vocab(), "aa", {4, 5}, "bb");
  int64_t L = 6;
  std::vector<int32_t> batch_ab(static_cast<size_t>(2 * L), model.vocab().pad_id());
  std::copy(s1.begin(), s1.end(), batch_ab.begin());
  std::copy(s2.begin(), s2.end(), batch_ab.begin() + L);
  std::vector<int32_t> batch_ba(static_cast<size_t>(2 * L), model.vocab().pad_id());
  std::copy(s2.begin(), s2.end(), batch_ba.begin());
  std::copy(s1.begin(), s1.end(), batch_ba.begin() + L);

  auto e1 = model.encode(batch_ab, {static_cast<int32_t>(s1.size()), static_cast<int32_t>(s2.size())}, 2, L);
  auto e1b = model.encode(batch_ab, {static_cast<int32_t>(s1.size()), static_cast<int32_t>(s2.size())}, 2, L);
  CHECK(e1.states.values() == e1b.states.values());

  auto e2 = model.encode(batch_ba, {static_cast<int32_t>(s2.size()), static_cast<int32_t>(s1.size())}, 2, L);
  int64_t d = cfg.model_dim;
  for (int64_t pos = 0; pos < static_cast<int64_t>(s1.size()); ++pos)
    for (int64_t c = 0; c < d; ++c)
      CHECK(e1.states.values()[static_cast<size_t>(pos * d + c)] ==
            doctest::Approx(e2.states.values()[static_cast<size_t>((L + pos) * d + c)]).epsilon(1e-12));
}

TEST_CASE("encode: appended pad tokens leave real positions unchanged") {
  auto [vocab, cfg] = toy_setup();
  TranslationModel model(cfg, vocab, 8);
  auto ids = ids_for(model.vocab(), "aa", {1, 2, 3, 4}, "bb");
  int32_t n = static_cast<int32_t>(ids.size());

  auto tight = model.encode(ids, {n}, 1, n);
  std::vector<int32_t> padded = ids;
  for (int extra = 0; extra < 3; ++extra) padded.push_back(model.vocab().pad_id());
  auto loose = model.encode(padded, {n}, 1, n + 3);

  int64_t d = cfg.model_dim;
  for (int64_t pos = 0; pos < n; ++pos)
    for (int64_t c = 0; c < d; ++c)
      CHECK(std::abs(tight.states.values()[static_cast<size_t>(pos * d + c)] -
                     loose.states.values()[static_cast<size_t>(pos * d + c)]) < 1e-6);
}

TEST_CASE("encode: out-of-range id is a contract error") {
  auto [vocab, cfg] = toy_setup();
  TranslationModel model(cfg, vocab, 9);
  std::vector<int32_t> bad{model.vocab().bos_id(), static_cast<int32_t>(model.vocab().size() + 5)};
  CHECK_THROWS_AS(model.encode(bad, {2}, 1, 2), ContractError);
}

TEST_CASE("attention weight rows sum to one over unmasked keys") {
  Rng rng(55);
  int64_t L = 5;
  // value = identity so the context rows are exactly the attention rows
  Tensor q = random_tensor({1, L, L}, rng);
  Tensor k = random_tensor({1, L, L}, rng);
  Tensor v = Tensor::zeros({1, L, L});
  for (int64_t i = 0; i < L; ++i) v.values()[static_cast<size_t>(i * L + i)] = 1.0;
  Tensor mask = Tensor::zeros({1, L, L});
  for (int64_t i = 0; i < L; ++i)
    for (int64_t j = 0; j < L; ++j) mask.values()[static_cast<size_t>(i * L + j)] = j < 4 ? 1.0 : 0.0;

  Tensor probs = plain_attention(q, k, v, mask);
  for (int64_t i = 0; i < L; ++i) {
    real sum = 0;
    for (int64_t j = 0; j < L; ++j) sum += probs.values()[static_cast<size_t>(i * L + j)];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(probs.values()[static_cast<size_t>(i * L + 4)] == 0.0);  // masked key
  }
}

TEST_CASE("relative logits: distances beyond the clip share the bucket") {
  Rng rng(56);
  int64_t L = 12, dh = 3, clip = 2;
  Tensor q = random_tensor({1, L, dh}, rng);
  Tensor rel = random_tensor({2 * clip + 1, dh}, rng);
  Tensor logits = rel_position_logits(q, rel, clip);
  // query at i=0: keys at j=2 (distance k) and j=7 (distance k+5) share logits
  CHECK(logits.values()[2] == doctest::Approx(logits.values()[7]).epsilon(1e-12));
  // symmetric side: query at i=11, keys at j=9 and j=4
  CHECK(logits.values()[static_cast<size_t>(11 * L + 9)] ==
        doctest::Approx(logits.values()[static_cast<size_t>(11 * L + 4)]).epsilon(1e-12));
}

TEST_CASE("rel_attention: two-position hand-computed oracle") {
  // dh = 1, single batch: everything reduces to scalar arithmetic.
  int64_t clip = 1;
  Tensor q = Tensor::from_values({1, 2, 1}, {1.0, 2.0});
  Tensor k = Tensor::from_values({1, 2, 1}, {0.5, -1.0});
  Tensor v = Tensor::from_values({1, 2, 1}, {3.0, 7.0});
  Tensor rel = Tensor::from_values({3, 1}, {0.2, 0.0, -0.3});  // buckets -1, 0, +1
  Tensor mask = Tensor::full({1, 2, 2}, 1.0);

  Tensor out = rel_attention(q, k, v, mask, rel, clip);

  auto expect_row = [&](double qv, int i) {
    double e0 = qv * 0.5 + qv * (i == 0 ? 0.0 : 0.2);   // key 0: distance 0-i
    double e1 = qv * -1.0 + qv * (i == 0 ? -0.3 : 0.0);  // key 1: distance 1-i
    e0 /= 1.0;                                           // sqrt(dh) = 1
    e1 /= 1.0;
    double m = std::max(e0, e1);
    double p0 = std::exp(e0 - m), p1 = std::exp(e1 - m);
    double z = p0 + p1;
    return (p0 / z) * 3.0 + (p1 / z) * 7.0;
  };
  CHECK(out.values()[0] == doctest::Approx(expect_row(1.0, 0)).epsilon(1e-12));
  CHECK(out.values()[1] == doctest::Approx(expect_row(2.0, 1)).epsilon(1e-12));
}

TEST_CASE("rel_attention and plain_attention match finite differences") {
  for (int seed = 0; seed < 21; ++seed) {
    Rng rng(900 + seed);
    int64_t b = 1 + rng.uniform_int(2), L = 2 + static_cast<int64_t>(rng.uniform_int(3)), dh = 3;
    int64_t clip = 2;
    Tensor mask = Tensor::zeros({b, L, L});
    for (int64_t r = 0; r < b; ++r)
      for (int64_t i = 0; i < L; ++i)
        for (int64_t j = 0; j < L; ++j)
          mask.values()[static_cast<size_t>((r * L + i) * L + j)] =
              (j <= i || rng.uniform() < 0.7) ? 1.0 : 0.0;
    auto f = [&](std::vector<Tensor>& in) {
      return rel_attention(in[0], in[1], in[2], mask, in[3], clip);
    };
    auto r = gradcheck(f,
                       {random_tensor({b, L, dh}, rng), random_tensor({b, L, dh}, rng),
                        random_tensor({b, L, dh}, rng), random_tensor({2 * clip + 1, dh}, rng)},
                       rng);
    CHECK_MESSAGE(r.ok, "rel_attention: " << r.detail);

    auto g = [&](std::vector<Tensor>& in) { return plain_attention(in[0], in[1], in[2], mask); };
    auto r2 = gradcheck(g,
                        {random_tensor({b, L, dh}, rng), random_tensor({b, L, dh}, rng),
                         random_tensor({b, L, dh}, rng)},
                        rng);
    CHECK_MESSAGE(r2.ok, "plain_attention: " << r2.detail);
  }
}

TEST_CASE("decode_step: causality, normalization, empty prefix error") {
  auto [vocab, cfg] = toy_setup();
  TranslationModel model(cfg, vocab, 10);
  const auto& v = model.vocab();

  auto src = ids_for(v, "aa", {1, 2, 3}, "bb");
  auto enc = model.encode_sentence(src);

  std::vector<int32_t> target{v.bos_id(), v.word_id("bb", "bbw1"), v.word_id("bb", "bbw2"),
                              v.word_id("bb", "bbw3")};

  // scores at step t from decode_step(prefix[0..t]) never change as the
  // prefix grows; teacher-forced full pass must agree with per-step decoding
  std::vector<std::vector<real>> per_step;
  for (size_t t = 1; t <= target.size(); ++t)
    per_step.push_back(model.decode_step_logprobs(enc, std::vector<int32_t>(target.begin(), target.begin() + t)));

  {
    NoGradGuard guard;
    Tensor dec = model.decode_states(enc, target, 1, static_cast<int64_t>(target.size()));
    Tensor lp = model.output_log_probs(dec);
    for (size_t t = 0; t < target.size(); ++t)
      for (int64_t c = 0; c < v.size(); ++c)
        CHECK(std::abs(lp.values()[t * static_cast<size_t>(v.size()) + static_cast<size_t>(c)] -
                       per_step[t][static_cast<size_t>(c)]) < 1e-9);
  }

  // probabilities sum to 1
  for (const auto& scores : per_step) {
    real sum = 0;
    for (real s : scores) sum += std::exp(s);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
  }

  // suffix perturbation: changing a later target token leaves earlier scores alone
  std::vector<int32_t> perturbed = target;
  perturbed[3] = v.word_id("bb", "bbw7");
  auto s2 = model.decode_step_logprobs(enc, std::vector<int32_t>(perturbed.begin(), perturbed.begin() + 2));
  for (size_t c = 0; c < s2.size(); ++c) CHECK(s2[c] == per_step[1][c]);

  CHECK_THROWS_AS(model.decode_step_logprobs(enc, {}), ContractError);
}

TEST_CASE("untrained model perplexity is close to vocabulary size") {
  auto [vocab, cfg] = toy_setup(40, 32, 2, 4);
  cfg.label_smoothing = 0.0;
  TranslationModel model(cfg, vocab, 11);
  const auto& v = model.vocab();

  Rng rng(12);
  real total_nll = 0;
  int64_t count = 0;
  NoGradGuard guard;
  for (int trial = 0; trial < 50; ++trial) {
    auto src = ids_for(v, "aa", {static_cast<int>(rng.uniform_int(40)), static_cast<int>(rng.uniform_int(40))}, "bb");
    auto enc = model.encode_sentence(src);
    std::vector<int32_t> prefix{v.bos_id()};
    for (int step = 0; step < 8; ++step) {
      auto lp = model.decode_step_logprobs(enc, prefix);
      int32_t y = static_cast<int32_t>(rng.uniform_int(static_cast<uint64_t>(v.size())));
      total_nll -= lp[static_cast<size_t>(y)];
      ++count;
      prefix.push_back(y);
    }
  }
  real ppl = std::exp(total_nll / static_cast<real>(count));
  CHECK(std::abs(ppl / static_cast<real>(v.size()) - 1.0) < 0.05);
}

TEST_CASE("tied embeddings: logits are exactly states . E^T and follow E mutations") {
  auto [vocab, cfg] = toy_setup();
  TranslationModel model(cfg, vocab, 13);
  auto& v = model.vocab();
  NoGradGuard guard;

  auto src = ids_for(v, "aa", {1, 2}, "bb");
  auto enc = model.encode_sentence(src);
  Tensor dec = model.decode_states(enc, {v.bos_id()}, 1, 1);
  Tensor logits = model.output_logits(dec);
  for (int64_t c = 0; c < v.size(); ++c) {
    real manual = 0;
    for (int64_t e = 0; e < v.dim(); ++e)
      manual += dec.values()[static_cast<size_t>(e)] *
                v.embedding().values()[static_cast<size_t>(c * v.dim() + e)];
    CHECK(logits.values()[static_cast<size_t>(c)] == doctest::Approx(manual).epsilon(1e-12));
  }

  // mutating a row of E changes the corresponding logit and the input lookup
  int32_t probe = v.word_id("bb", "bbw5");
  real before = logits.values()[static_cast<size_t>(probe)];
  v.embedding().values()[static_cast<size_t>(probe * v.dim())] += 0.5;
  Tensor logits2 = model.output_logits(dec);
  CHECK(logits2.values()[static_cast<size_t>(probe)] != doctest::Approx(before).epsilon(1e-9));

  int32_t src_word = v.word_id("aa", "aaw1");
  auto enc_before = model.encode_sentence(ids_for(v, "aa", {1, 2}, "bb"));
  v.embedding().values()[static_cast<size_t>(src_word * v.dim())] += 0.5;
  auto enc_after = model.encode_sentence(ids_for(v, "aa", {1, 2}, "bb"));
  CHECK(enc_before.states.values() != enc_after.states.values());
}

TEST_CASE("freeze contracts: frozen bytes identical across real optimizer steps") {
  auto [vocab, cfg] = toy_setup(8, 16, 2, 2);
  TranslationModel model(cfg, vocab, 14);
  model.set_freeze_embeddings(true);
  model.set_freeze_encoder(true);
  model.set_training(true);

  uint64_t words_before = model.embedding_word_rows_hash();
  uint64_t enc_before = model.encoder_param_hash();

  ParallelCorpus corpus;
  Rng rng(15);
  for (int i = 0; i < 8; ++i) {
    std::vector<std::string> s{"aaw" + std::to_string(i % 8), "aaw" + std::to_string((i + 1) % 8)};
    std::vector<std::string> t{"bbw" + std::to_string(i % 8)};
    corpus.pairs.push_back({s, t, "aa", "bb"});
  }
  auto plan = make_batches(corpus, model.vocab(), 64, 3);
  Optimizer opt({OptKind::adam, 0.9, 0.999, 1e-8, 0.0, 5.0});
  auto params = model.trainable_parameters();
  for (int epoch = 0; epoch < 3; ++epoch)
    for (const auto& b : plan.batches) {
      Tensor loss = model.forward_loss(b);
      backward(loss);
      opt.step(params, 1e-3);
    }

  CHECK(model.embedding_word_rows_hash() == words_before);
  CHECK(model.encoder_param_hash() == enc_before);
  CHECK(opt.step_count() > 0);
}

TEST_CASE("quick overfit smoke: loss falls fast on a tiny corpus") {
  auto [vocab, cfg] = toy_setup(8, 16, 2, 2);
  TranslationModel model(cfg, vocab, 16);
  model.set_freeze_embeddings(true);
  model.set_training(true);

  ParallelCorpus corpus;
  for (int i = 0; i < 8; ++i) {
    std::vector<std::string> s{"aaw" + std::to_string(i)};
    std::vector<std::string> t{"bbw" + std::to_string(i), "bbw" + std::to_string((i * 3) % 8)};
    corpus.pairs.push_back({s, t, "aa", "bb"});
  }
  auto plan = make_batches(corpus, model.vocab(), 128, 4);
  REQUIRE(plan.batches.size() == 1);
  Optimizer opt({OptKind::adam, 0.9, 0.999, 1e-8, 0.0, 5.0});
  auto params = model.trainable_parameters();

  Tensor first = model.forward_loss(plan.batches[0]);
  real initial = first.item();
  real last = initial;
  for (int step = 0; step < 250; ++step) {
    Tensor loss = model.forward_loss(plan.batches[0]);
    last = loss.item();
    backward(loss);
    opt.step(params, 2e-3);
  }
  CHECK(last < 0.5 * initial);
}
