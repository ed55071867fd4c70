#include "hubmt/synthbench.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace hubmt {

namespace {

EMat random_rotation(int64_t d, Rng& rng) {
  EMat g(d, d);
  for (int64_t i = 0; i < d; ++i)
    for (int64_t j = 0; j < d; ++j) g(i, j) = rng.normal();
  Eigen::HouseholderQR<EMat> qr(g);
  return EMat(qr.householderQ());
}

// Concept roles by id range; sentences follow a small NP-VP grammar in a
// canonical order, so adjacent tokens never repeat.
struct Roles {
  int64_t det_end, adj_end, noun_end, verb_end;  // adv = rest
  explicit Roles(int64_t c)
      : det_end(std::max<int64_t>(2, c / 20)),
        adj_end(det_end + std::max<int64_t>(2, c / 6)),
        noun_end(adj_end + std::max<int64_t>(2, (c * 2) / 5)),
        verb_end(noun_end + std::max<int64_t>(2, c / 4)) {}
};

// Zipf-like skew: low indices inside a class dominate.
int64_t skewed_pick(int64_t lo, int64_t hi, Rng& rng) {
  real u = rng.uniform();
  return lo + static_cast<int64_t>(static_cast<real>(hi - lo) * u * u * 0.9999);
}

std::vector<int64_t> concept_sentence(const Roles& roles, int64_t concepts, Rng& rng) {
  std::vector<int64_t> out;
  auto det = [&] { return skewed_pick(0, roles.det_end, rng); };
  auto adj = [&] { return skewed_pick(roles.det_end, roles.adj_end, rng); };
  auto noun = [&] { return skewed_pick(roles.adj_end, roles.noun_end, rng); };
  auto verb = [&] { return skewed_pick(roles.noun_end, roles.verb_end, rng); };
  auto adv = [&] { return skewed_pick(roles.verb_end, concepts, rng); };

  out.push_back(det());
  if (rng.uniform() < 0.5) out.push_back(adj());
  out.push_back(noun());
  out.push_back(verb());
  if (rng.uniform() < 0.7) {
    out.push_back(det());
    if (rng.uniform() < 0.3) out.push_back(adj());
    out.push_back(noun());
  }
  if (rng.uniform() < 0.4) out.push_back(adv());
  return out;
}

std::vector<int64_t> reorder(const std::vector<int64_t>& seq, WordOrder order) {
  std::vector<int64_t> out = seq;
  switch (order) {
    case WordOrder::identity:
      break;
    case WordOrder::swap_pairs:
      for (size_t i = 0; i + 1 < out.size(); i += 2) std::swap(out[i], out[i + 1]);
      break;
    case WordOrder::reverse:
      std::reverse(out.begin(), out.end());
      break;
  }
  return out;
}

}  // namespace

SyntheticFamily generate_family(const FamilySpec& spec, uint64_t seed) {
  if (spec.concepts <= 0) throw ConfigError("generate_family: concept count must be positive");
  if (spec.languages.size() < 3)
    throw ConfigError("generate_family: need at least 3 languages (2 base + 1 held-out)");

  SyntheticFamily family;
  family.spec = spec;
  for (size_t i = 0; i + 1 < spec.languages.size(); ++i)
    family.base_langs.push_back(spec.languages[i].name);
  family.new_lang = spec.languages.back().name;

  Rng rng(seed);
  Roles roles(spec.concepts);

  // Shared concept geometry.
  EMat concept_vecs(spec.concepts, spec.dim);
  for (int64_t i = 0; i < spec.concepts; ++i)
    for (int64_t c = 0; c < spec.dim; ++c) concept_vecs(i, c) = rng.normal();

  // Per-language relabeling (concept -> surface index), rotation, space.
  std::map<std::string, std::vector<int64_t>> relabel;
  for (const auto& lang : spec.languages) {
    std::vector<int64_t> perm(spec.concepts);
    std::iota(perm.begin(), perm.end(), 0);
    if (!lang.identity_relabeling)
      for (size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.uniform_int(i)]);
    relabel[lang.name] = perm;

    EMat rot = lang.identity_rotation ? EMat(EMat::Identity(spec.dim, spec.dim))
                                      : random_rotation(spec.dim, rng);
    EmbeddingSpace space(lang.name, spec.dim);
    // Surface word for concept c is "x<perm[c]>"; rows must be indexed by
    // surface order so the file is deterministic in the surface vocabulary.
    std::vector<int64_t> inverse(spec.concepts);
    for (int64_t c = 0; c < spec.concepts; ++c) inverse[perm[static_cast<size_t>(c)]] = c;
    for (int64_t s = 0; s < spec.concepts; ++s) {
      int64_t concept_id = inverse[static_cast<size_t>(s)];
      EVec v = rot * concept_vecs.row(concept_id).transpose();
      if (lang.rotation_noise > 0)
        for (int64_t c = 0; c < spec.dim; ++c) v[c] += lang.rotation_noise * rng.normal();
      space.add_word("x" + std::to_string(s), v);
    }
    space.build_ngram_bank();
    family.spaces.emplace(lang.name, std::move(space));
  }

  auto surface = [&](const std::string& lang, int64_t concept_id) {
    return "x" + std::to_string(relabel.at(lang)[static_cast<size_t>(concept_id)]);
  };
  auto render = [&](const std::string& lang, const std::vector<int64_t>& concepts_seq) {
    const auto& lang_spec = *std::find_if(spec.languages.begin(), spec.languages.end(),
                                          [&](const LanguageSpec& l) { return l.name == lang; });
    std::vector<std::string> words;
    for (int64_t c : reorder(concepts_seq, lang_spec.order)) words.push_back(surface(lang, c));
    return words;
  };

  auto gen_concepts = [&](int64_t count) {
    std::vector<std::vector<int64_t>> out;
    out.reserve(static_cast<size_t>(count));
    for (int64_t i = 0; i < count; ++i) out.push_back(concept_sentence(roles, spec.concepts, rng));
    return out;
  };

  // Train: parallel among base languages; mono for everyone (the held-out
  // language only ever ships monolingual training text).
  for (size_t a = 0; a < family.base_langs.size(); ++a) {
    for (size_t b = 0; b < family.base_langs.size(); ++b) {
      if (a == b) continue;
      auto sentences = gen_concepts(spec.train_sentences);
      ParallelCorpus corpus;
      for (const auto& s : sentences)
        corpus.pairs.push_back({render(family.base_langs[a], s), render(family.base_langs[b], s),
                                family.base_langs[a], family.base_langs[b]});
      family.train[SyntheticFamily::key(family.base_langs[a], family.base_langs[b])] =
          std::move(corpus);
    }
  }
  for (const auto& lang : spec.languages) {
    auto sentences = gen_concepts(lang.name == family.new_lang ? spec.mono_sentences
                                                               : spec.mono_sentences / 2 + 1);
    MonoCorpus mono;
    mono.lang = lang.name;
    for (const auto& s : sentences) mono.sentences.push_back(render(lang.name, s));
    family.mono[lang.name] = std::move(mono);
  }

  // Dev/test: every ordered pair, shared concept sentences per split.
  auto make_split = [&](int64_t count, std::map<std::string, ParallelCorpus>& out) {
    auto sentences = gen_concepts(count);
    for (const auto& from : spec.languages)
      for (const auto& to : spec.languages) {
        if (from.name == to.name) continue;
        ParallelCorpus corpus;
        for (const auto& s : sentences)
          corpus.pairs.push_back({render(from.name, s), render(to.name, s), from.name, to.name});
        out[SyntheticFamily::key(from.name, to.name)] = std::move(corpus);
      }
  };
  make_split(spec.dev_sentences, family.dev);
  make_split(spec.test_sentences, family.test);

  // Gold dictionaries: the concept bijections.
  for (const auto& from : spec.languages)
    for (const auto& to : spec.languages) {
      if (from.name == to.name) continue;
      BilingualDictionary dict{from.name, to.name, {}};
      for (int64_t c = 0; c < spec.concepts; ++c)
        dict.pairs.emplace_back(surface(from.name, c), surface(to.name, c));
      family.dictionaries[SyntheticFamily::key(from.name, to.name)] = std::move(dict);
    }

  return family;
}

void write_family(const SyntheticFamily& family, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto write_corpus = [&](const std::string& path, const std::vector<std::vector<std::string>>& sentences) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    for (const auto& s : sentences) out << detokenize(s) << '\n';
  };
  for (const auto& [lang, space] : family.spaces) space.save_vec(dir + "/" + lang + ".vec");
  for (const auto& [lang, mono] : family.mono) write_corpus(dir + "/mono." + lang + ".txt", mono.sentences);
  auto write_pairs = [&](const std::string& split, const std::map<std::string, ParallelCorpus>& pairs) {
    for (const auto& [key, corpus] : pairs) {
      auto sep = key.find('>');
      std::string src_lang = key.substr(0, sep), tgt_lang = key.substr(sep + 1);
      std::vector<std::vector<std::string>> src, tgt;
      for (const auto& p : corpus.pairs) {
        src.push_back(p.src);
        tgt.push_back(p.tgt);
      }
      write_corpus(dir + "/" + split + "." + src_lang + "-" + tgt_lang + "." + src_lang + ".txt", src);
      write_corpus(dir + "/" + split + "." + src_lang + "-" + tgt_lang + "." + tgt_lang + ".txt", tgt);
    }
  };
  write_pairs("train", family.train);
  write_pairs("dev", family.dev);
  write_pairs("test", family.test);
  for (const auto& [key, dict] : family.dictionaries) {
    auto sep = key.find('>');
    std::ofstream out(dir + "/dict." + key.substr(0, sep) + "-" + key.substr(sep + 1) + ".txt");
    for (const auto& [s, t] : dict.pairs) out << s << ' ' << t << '\n';
  }
}

}  // namespace hubmt
