#include "hubmt/train.hpp"

#include <algorithm>
#include <map>

#include "hubmt/bleu.hpp"

namespace hubmt {

std::string to_string(AdaptMethod m) {
  switch (m) {
    case AdaptMethod::supervised: return "supervised";
    case AdaptMethod::denoise_ae: return "denoise_ae";
    case AdaptMethod::frozen_ae: return "frozen_ae";
    case AdaptMethod::frozen_denoise_ae: return "frozen_denoise_ae";
    case AdaptMethod::backtranslate: return "backtranslate";
  }
  return "?";
}

AdaptMethod adapt_method_from_string(const std::string& s) {
  if (s == "supervised") return AdaptMethod::supervised;
  if (s == "denoise_ae") return AdaptMethod::denoise_ae;
  if (s == "frozen_ae") return AdaptMethod::frozen_ae;
  if (s == "frozen_denoise_ae") return AdaptMethod::frozen_denoise_ae;
  if (s == "backtranslate") return AdaptMethod::backtranslate;
  throw ConfigError("unknown adaptation method: " + s);
}

real evaluate_dev_bleu(const TranslationModel& m, const ParallelCorpus& dev,
                       const DecodeConfig& cfg, int threads) {
  if (dev.pairs.empty()) throw ConfigError("dev evaluation: empty dev corpus");
  // group by direction
  std::map<std::pair<std::string, std::string>, std::pair<std::vector<std::vector<std::string>>,
                                                           std::vector<std::vector<std::string>>>>
      directions;
  for (const auto& p : dev.pairs) {
    auto& bucket = directions[{p.src_lang, p.tgt_lang}];
    bucket.first.push_back(p.src);
    bucket.second.push_back(p.tgt);
  }
  real total = 0;
  for (const auto& [dir, data] : directions) {
    DecodeConfig dcfg = cfg;
    dcfg.target_lang = dir.second;
    auto hyp = decode_corpus(m, data.first, dir.first, dcfg, threads);
    total += bleu(hyp, data.second).bleu;
  }
  return total / static_cast<real>(directions.size());
}

TrainReport train_loop(TranslationModel& m, const CorpusProvider& provider,
                       const ParallelCorpus* dev, const TrainOptions& options) {
  TrainReport report;
  if (options.max_steps <= 0) return report;

  Optimizer opt(options.optim);
  auto params = m.trainable_parameters();
  if (params.empty()) throw ConfigError("training: nothing to train (all parameters frozen)");

  std::vector<std::vector<real>> best_snapshot;
  auto run_dev = [&](int64_t step) {
    if (!dev) return;
    bool was_training = m.training();
    m.set_training(false);
    real score = evaluate_dev_bleu(m, *dev, options.dev_decode, options.threads);
    m.set_training(was_training);
    MetricsRecord rec;
    rec.step = step;
    rec.loss = report.records.empty() ? 0 : report.records.back().loss;
    rec.lr = step > 0 ? schedule_lr(options.schedule, std::max<int64_t>(step, 1)) : 0;
    rec.has_dev = true;
    rec.dev_bleu = score;
    report.records.push_back(rec);
    if (score > report.best_dev_bleu) {
      report.best_dev_bleu = score;
      report.best_step = step;
      best_snapshot = m.snapshot_values();
    }
  };

  m.set_training(true);
  int64_t epoch = 0;
  int64_t micro_in_step = 0;
  real step_loss = 0;
  bool done = false;
  while (!done) {
    ParallelCorpus corpus = provider(epoch);
    if (corpus.pairs.empty()) throw ConfigError("training: empty corpus");
    auto plan = make_batches(corpus, m.vocab(), options.batch_tokens, options.seed + static_cast<uint64_t>(epoch));
    if (plan.batches.empty())
      throw ConfigError("training: batch budget of " + std::to_string(options.batch_tokens) +
                        " tokens admits no batch");
    for (const auto& batch : plan.batches) {
      Tensor loss = m.forward_loss(batch);
      step_loss += loss.item();
      backward(scale(loss, real(1) / static_cast<real>(options.accum_count)));
      if (++micro_in_step < options.accum_count) continue;

      int64_t step = opt.step_count() + 1;
      real lr = schedule_lr(options.schedule, step);
      opt.step(params, lr);
      MetricsRecord rec;
      rec.step = step;
      rec.loss = step_loss / static_cast<real>(options.accum_count);
      rec.lr = lr;
      report.records.push_back(rec);
      report.final_loss = rec.loss;
      micro_in_step = 0;
      step_loss = 0;

      if (options.eval_every > 0 && step % options.eval_every == 0) run_dev(step);
      if (step >= options.max_steps) {
        done = true;
        break;
      }
    }
    ++epoch;
  }
  report.steps_run = options.max_steps;
  m.set_training(false);

  if (dev) {
    if (report.records.empty() || !report.records.back().has_dev) run_dev(options.max_steps);
    if (!best_snapshot.empty()) m.restore_values(best_snapshot);
  }
  return report;
}

TrainReport train_supervised(TranslationModel& m, const ParallelCorpus& data,
                             const ParallelCorpus* dev, const TrainOptions& options) {
  if (data.pairs.empty()) throw ConfigError("train_supervised: empty corpus");
  for (const auto& p : data.pairs) {
    if (!m.vocab().has_language(p.src_lang))
      throw ConfigError("train_supervised: language '" + p.src_lang + "' not in vocabulary");
    if (!m.vocab().has_language(p.tgt_lang))
      throw ConfigError("train_supervised: language '" + p.tgt_lang + "' not in vocabulary");
  }
  return train_loop(m, [&](int64_t) { return data; }, dev, options);
}

TrainReport train_autoencoder(TranslationModel& m, const MonoCorpus& mono,
                              const AdaptationPlan& plan, const ParallelCorpus* dev) {
  if (!m.vocab().has_language(plan.new_lang))
    throw ConfigError("train_autoencoder: language '" + plan.new_lang + "' not in vocabulary");
  if (mono.sentences.empty()) throw ConfigError("train_autoencoder: empty monolingual corpus");

  bool denoise = plan.method == AdaptMethod::denoise_ae || plan.method == AdaptMethod::frozen_denoise_ae;
  const std::string lang = plan.new_lang;
  NoiseSpec noise = plan.noise;
  auto provider = [&mono, lang, denoise, noise](int64_t epoch) {
    ParallelCorpus corpus;
    Rng rng(noise.seed + 0x9e37ull * static_cast<uint64_t>(epoch + 1));
    for (const auto& s : mono.sentences) {
      std::vector<std::string> noisy = denoise ? apply_noise(s, noise, rng) : s;
      corpus.pairs.push_back({std::move(noisy), s, lang, lang});
    }
    return corpus;
  };
  return train_loop(m, provider, dev, plan.train);
}

ParallelCorpus backtranslate(const TranslationModel& m, const MonoCorpus& mono,
                             const std::vector<std::string>& pivots, int threads,
                             int64_t* skipped) {
  if (pivots.empty()) throw ConfigError("backtranslate: no pivot languages");
  for (const auto& p : pivots)
    if (!m.vocab().has_language(p)) throw ConfigError("backtranslate: unknown pivot language: " + p);
  if (!m.vocab().has_language(mono.lang))
    throw ConfigError("backtranslate: monolingual language '" + mono.lang + "' not in vocabulary");

  ParallelCorpus synthetic;
  int64_t skip_count = 0;
  for (const auto& pivot : pivots) {
    // Greedy search for throughput; quality comes from the source-side
    // strength of blind decoding.
    DecodeConfig cfg{1, 0, 0.6, pivot, false};
    auto hyp = decode_corpus(m, mono.sentences, mono.lang, cfg, threads);
    for (size_t i = 0; i < hyp.size(); ++i) {
      if (hyp[i].empty()) {
        ++skip_count;
        continue;
      }
      synthetic.pairs.push_back({hyp[i], mono.sentences[i], pivot, mono.lang});
    }
  }
  if (skipped) *skipped = skip_count;
  return synthetic;
}

AdaptReport adapt(TranslationModel& m, const AdaptationPlan& plan, const MonoCorpus& mono,
                  const ParallelCorpus& dev) {
  if (!m.vocab().has_language(plan.new_lang))
    throw ConfigError("adapt: language '" + plan.new_lang + "' not in vocabulary; extend it first");
  for (const auto& p : dev.pairs)
    if (p.src_lang != plan.new_lang && p.tgt_lang != plan.new_lang)
      throw ConfigError("adapt: dev pair " + p.src_lang + ">" + p.tgt_lang +
                        " does not involve the new language");

  AdaptReport report;
  TrainOptions options = plan.train;

  bool freeze_enc = plan.method == AdaptMethod::frozen_ae ||
                    plan.method == AdaptMethod::frozen_denoise_ae ||
                    (plan.method == AdaptMethod::backtranslate && plan.freeze_encoder_backtranslation);
  m.set_freeze_encoder(freeze_enc);

  m.set_training(false);
  report.initial_dev_bleu = evaluate_dev_bleu(m, dev, options.dev_decode, options.threads);
  if (plan.iterations <= 0) {
    report.final_dev_bleu = report.initial_dev_bleu;
    MetricsRecord rec;
    rec.step = 0;
    rec.has_dev = true;
    rec.dev_bleu = report.initial_dev_bleu;
    report.train.records.push_back(rec);
    report.train.best_dev_bleu = report.initial_dev_bleu;
    return report;
  }

  options.max_steps = plan.iterations;
  switch (plan.method) {
    case AdaptMethod::supervised: {
      if (!plan.supervised_data || plan.supervised_data->pairs.empty())
        throw ConfigError("adapt: supervised method needs parallel data");
      report.train = train_supervised(m, *plan.supervised_data, &dev, options);
      break;
    }
    case AdaptMethod::denoise_ae:
    case AdaptMethod::frozen_ae:
    case AdaptMethod::frozen_denoise_ae: {
      AdaptationPlan p2 = plan;
      p2.train = options;
      report.train = train_autoencoder(m, mono, p2, &dev);
      break;
    }
    case AdaptMethod::backtranslate: {
      int64_t skipped = 0;
      ParallelCorpus synthetic = backtranslate(m, mono, plan.pivot_langs, options.threads, &skipped);
      report.synthetic_pairs = static_cast<int64_t>(synthetic.pairs.size());
      report.synthetic_skipped = skipped;
      if (synthetic.pairs.empty()) throw DataError("adapt: backtranslation produced no pairs");
      report.train = train_loop(m, [&](int64_t) { return synthetic; }, &dev, options);
      break;
    }
  }
  report.final_dev_bleu = report.train.best_dev_bleu;
  return report;
}

}  // namespace hubmt
