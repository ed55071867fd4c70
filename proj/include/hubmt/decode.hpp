#pragma once

#include <atomic>
#include <string>
#include <vector>

#include "hubmt/model.hpp"

namespace hubmt {

struct DecodeConfig {
  int beam_size = 1;  // 1 = greedy
  int64_t max_len = 0;  // 0: 2 * source length + 10
  real length_norm = 0.6;  // alpha in (5+len)^a / 6^a
  std::string target_lang;
  bool collapse_duplicates = false;
};

struct Hypothesis {
  std::vector<int32_t> ids;  // begins with <bos>
  real score = 0;            // cumulative log-prob
  bool finished = false;
};

// Surface tokens of the decoded sentence (specials stripped, optional
// duplicate collapse applied). Pure given (model, config, input).
std::vector<std::string> decode(const TranslationModel& m, const std::vector<std::string>& src_tokens,
                                const std::string& src_lang, const DecodeConfig& cfg);

// Decoding from a language the model was never trained on: source vectors
// come straight from the aligned embedding space, so unseen words work too.
// The vocabulary must already have been extended by src_lang's tokens.
std::vector<std::string> blind_decode(const TranslationModel& m, const EmbeddingSpace& src_space,
                                      const std::vector<std::string>& src_tokens,
                                      const std::string& src_lang, const DecodeConfig& cfg);

// Raw id-level search against prebuilt encoder states.
std::vector<int32_t> decode_ids(const TranslationModel& m, const EncoderStates& enc,
                                const DecodeConfig& cfg, int64_t src_len_hint);

// Collapse maximal runs of identical tokens to one occurrence.
std::vector<std::string> collapse_duplicates(const std::vector<std::string>& tokens);

// Continuous-head word choice: cosine argmax over the target language's word
// rows plus <eos>; ties go to the lowest id.
int32_t continuous_decode_step(const EVec& predicted, const MultiVocab& v,
                               const std::string& target_lang);

// Decode many sentences, optionally across threads (HUBMT_THREADS or arg).
std::vector<std::vector<std::string>> decode_corpus(
    const TranslationModel& m, const std::vector<std::vector<std::string>>& sentences,
    const std::string& src_lang, const DecodeConfig& cfg, int threads = 0);

std::vector<std::vector<std::string>> blind_decode_corpus(
    const TranslationModel& m, const EmbeddingSpace& src_space,
    const std::vector<std::vector<std::string>>& sentences, const std::string& src_lang,
    const DecodeConfig& cfg, int threads = 0);

// Every emitted non-special token is checked against the requested target
// language; the acceptance suite asserts this never fires.
int64_t offtarget_emission_count();
void reset_offtarget_emission_count();

int decode_thread_count(int requested);

}  // namespace hubmt
