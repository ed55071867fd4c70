#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hubmt/decode.hpp"
#include "hubmt/model.hpp"
#include "hubmt/noise.hpp"
#include "hubmt/optim.hpp"

namespace hubmt {

struct MetricsRecord {
  int64_t step = 0;
  real loss = 0;
  real lr = 0;
  bool has_dev = false;
  real dev_bleu = 0;
};

struct TrainOptions {
  OptimizerConfig optim{OptKind::adam, 0.9, 0.999, 1e-8, 0.0, 5.0};
  LrSchedule schedule;
  int64_t max_steps = 1000;   // optimizer updates
  int64_t accum_count = 1;    // micro-batches per update
  int64_t batch_tokens = 1024;
  uint64_t seed = 1;
  int64_t eval_every = 200;
  DecodeConfig dev_decode{4, 0, 0.6, "", false};  // beam search for selection
  int threads = 0;
};

struct TrainReport {
  std::vector<MetricsRecord> records;
  real best_dev_bleu = -1;
  int64_t best_step = 0;
  real final_loss = 0;
  int64_t steps_run = 0;
};

using CorpusProvider = std::function<ParallelCorpus(int64_t epoch)>;

// Mean corpus BLEU over the directions present in dev, decoding with beam.
real evaluate_dev_bleu(const TranslationModel& m, const ParallelCorpus& dev,
                       const DecodeConfig& cfg, int threads = 0);

// Shared loop: token-bucketed batches, gradient accumulation, scheduled
// optimizer steps, periodic dev BLEU, best-checkpoint retention.
TrainReport train_loop(TranslationModel& m, const CorpusProvider& provider,
                       const ParallelCorpus* dev, const TrainOptions& options);

TrainReport train_supervised(TranslationModel& m, const ParallelCorpus& data,
                             const ParallelCorpus* dev, const TrainOptions& options);

enum class AdaptMethod { supervised, denoise_ae, frozen_ae, frozen_denoise_ae, backtranslate };

std::string to_string(AdaptMethod m);
AdaptMethod adapt_method_from_string(const std::string& s);

struct AdaptationPlan {
  AdaptMethod method = AdaptMethod::frozen_denoise_ae;
  std::string new_lang;
  NoiseSpec noise;                       // denoising methods
  std::vector<std::string> pivot_langs;  // backtranslation sources
  int64_t iterations = 1000;             // optimizer updates; 0 = score-only no-op
  bool freeze_encoder_backtranslation = true;
  const ParallelCorpus* supervised_data = nullptr;  // method == supervised
  TrainOptions train;
};

struct AdaptReport {
  TrainReport train;
  real initial_dev_bleu = 0;  // before any training (blind for a fresh language)
  real final_dev_bleu = 0;    // of the retained best checkpoint
  int64_t synthetic_pairs = 0;
  int64_t synthetic_skipped = 0;
};

// Autoencoding adaptation: pairs (noise(s), s) with the new language on both
// sides; encoder optionally frozen. Noise is resampled every epoch.
TrainReport train_autoencoder(TranslationModel& m, const MonoCorpus& mono,
                              const AdaptationPlan& plan, const ParallelCorpus* dev);

// One single round: greedy-decode every monolingual sentence into each pivot
// language, emit reversed pairs (synthetic source -> genuine target).
ParallelCorpus backtranslate(const TranslationModel& m, const MonoCorpus& mono,
                             const std::vector<std::string>& pivots, int threads = 0,
                             int64_t* skipped = nullptr);

// Dispatches on plan.method, retains the dev-BLEU-best checkpoint, reports
// the trajectory.
AdaptReport adapt(TranslationModel& m, const AdaptationPlan& plan, const MonoCorpus& mono,
                  const ParallelCorpus& dev);

}  // namespace hubmt
