#pragma once

#include <map>
#include <string>
#include <vector>

#include "hubmt/model.hpp"
#include "hubmt/train.hpp"

namespace hubmt {

// Flat "key value" configuration; a bare key is a boolean flag. Keys follow
// the training-parameter names used by common NMT toolkits (rnn_size,
// transformer_ff, warmup_steps, ...), so a parameter dump is directly usable
// as a config file.
class KvConfig {
 public:
  static KvConfig load(const std::string& path);
  static KvConfig from_string(const std::string& text);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::string str(const std::string& key, const std::string& fallback = "") const;
  int64_t integer(const std::string& key, int64_t fallback) const;
  real number(const std::string& key, real fallback) const;
  bool flag(const std::string& key) const;  // present and not "false"/"0"

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

struct RunSettings {
  TransformerConfig model;
  TrainOptions train;
  uint64_t seed = 1;
  int threads = 0;
};

// Interpret toolkit-style keys: rnn_size/word_vec_size -> model_dim,
// transformer_ff -> ff_dim, optim/adam_beta2/decay_method/... -> optimizer
// and schedule, loss nllvmf + generator_function continuous-linear -> the
// continuous head.
RunSettings settings_from_config(const KvConfig& cfg);

}  // namespace hubmt
