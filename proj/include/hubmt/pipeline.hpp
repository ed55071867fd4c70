#pragma once

#include <string>
#include <vector>

#include "hubmt/config.hpp"

namespace hubmt {

// Batch pipeline over a working directory. Stages communicate through files:
//
//   family/                synthetic corpora, vector and dictionary files
//   aligned/<lang>.vec     hub-space vectors (pivot included, identity)
//   reports/align.jsonl    alignment accuracies
//   vocab.manifest.txt / vocab.rows.bin
//   base.ckpt              multilingual base system
//   extended.ckpt          base + new-language vocabulary rows
//   adapted.<method>.ckpt  adaptation output
//   metrics.<stage>.jsonl  per-step training records
//   reports/bleu.jsonl and reports/bleu.txt
//
// Stage order follows the three-step approach: embeddings first, then the
// base system, then the new language.
int run_pipeline(const std::string& config_path);

void stage_synth(const KvConfig& cfg, const std::string& workdir);
void stage_align(const KvConfig& cfg, const std::string& workdir);
void stage_build_vocab(const KvConfig& cfg, const std::string& workdir);
void stage_train(const KvConfig& cfg, const std::string& workdir);
void stage_extend(const KvConfig& cfg, const std::string& workdir);
void stage_adapt(const KvConfig& cfg, const std::string& workdir);
void stage_backtranslate(const KvConfig& cfg, const std::string& workdir);
void stage_evaluate(const KvConfig& cfg, const std::string& workdir);
void stage_diagnose(const KvConfig& cfg, const std::string& workdir);

std::vector<std::string> split_list(const std::string& csv);

}  // namespace hubmt
