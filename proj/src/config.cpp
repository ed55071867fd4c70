#include "hubmt/config.hpp"

#include <fstream>
#include <sstream>

namespace hubmt {

KvConfig KvConfig::from_string(const std::string& text) {
  KvConfig cfg;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    std::string value;
    std::getline(ls, value);
    size_t start = value.find_first_not_of(" \t");
    value = start == std::string::npos ? "" : value.substr(start);
    size_t end = value.find_last_not_of(" \t\r");
    if (end != std::string::npos) value = value.substr(0, end + 1);
    cfg.values_[key] = value.empty() ? "true" : value;
  }
  return cfg;
}

KvConfig KvConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_string(ss.str());
}

std::string KvConfig::str(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

int64_t KvConfig::integer(const std::string& key, int64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return std::stoll(it->second);
  } catch (...) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + it->second + "'");
  }
}

real KvConfig::number(const std::string& key, real fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return static_cast<real>(std::stod(it->second));
  } catch (...) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + it->second + "'");
  }
}

bool KvConfig::flag(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return false;
  return it->second != "false" && it->second != "0";
}

RunSettings settings_from_config(const KvConfig& cfg) {
  RunSettings s;
  s.model.layers = cfg.integer("layers", 6);
  s.model.model_dim = cfg.integer("rnn_size", 300);
  int64_t wv = cfg.integer("word_vec_size", s.model.model_dim);
  if (wv != s.model.model_dim)
    throw ConfigError("word_vec_size must equal rnn_size (embeddings are tied to the model width)");
  s.model.ff_dim = cfg.integer("transformer_ff", 1200);
  s.model.heads = cfg.integer("heads", 6);
  s.model.rel_pos_clip = cfg.integer("rel_pos_clip", 16);
  s.model.label_smoothing = cfg.number("label_smoothing", 0.1);
  s.model.lambda_vmf = cfg.number("lambda_vmf", 0.2);

  bool continuous = cfg.str("loss") == "nllvmf" ||
                    cfg.str("generator_function").rfind("continuous", 0) == 0;
  s.model.head_kind = continuous ? HeadKind::continuous : HeadKind::softmax;
  s.model.dropout = cfg.number("dropout", continuous ? 0.1 : 0.2);

  std::string optim = cfg.str("optim", "adam");
  s.train.optim.kind = opt_kind_from_string(optim);
  s.train.optim.beta1 = cfg.number("adam_beta1", 0.9);
  s.train.optim.beta2 = cfg.number("adam_beta2", 0.999);
  s.train.optim.weight_decay = cfg.number("weight_decay", 0.0);
  s.train.optim.max_grad_norm = cfg.number("max_grad_norm", 5.0);

  std::string decay = cfg.str("decay_method", "noam");
  if (decay == "noam")
    s.train.schedule.kind = ScheduleKind::noam;
  else if (decay == "linear")
    s.train.schedule.kind = ScheduleKind::linear_warmup;
  else
    throw ConfigError("unknown decay_method: " + decay);
  s.train.schedule.warmup_steps = cfg.integer("warmup_steps", 4000);
  s.train.schedule.warmup_init_lr = cfg.number("warmup_init_lr", 1e-8);
  s.train.schedule.warmup_end_lr = cfg.number("warmup_end_lr", 7e-4);
  s.train.schedule.min_lr = cfg.number("min_lr", 1e-9);
  s.train.schedule.model_dim = s.model.model_dim;
  s.train.schedule.factor = cfg.number("learning_rate", 1.0);

  if (cfg.has("batch_type") && cfg.str("batch_type") != "tokens")
    throw ConfigError("only batch_type tokens is supported");
  if (cfg.has("normalization") && cfg.str("normalization") != "tokens")
    throw ConfigError("only normalization tokens is supported");
  s.train.batch_tokens = cfg.integer("batch_size", 1536);
  s.train.accum_count = cfg.integer("accum_count", 1);
  s.train.max_steps = cfg.integer("train_steps", 1000);
  s.train.eval_every = cfg.integer("valid_steps", 200);
  s.train.dev_decode.beam_size = static_cast<int>(cfg.integer("beam_size", 4));
  s.train.dev_decode.length_norm = cfg.number("length_norm", 0.6);

  s.seed = static_cast<uint64_t>(cfg.integer("seed", 1));
  s.threads = static_cast<int>(cfg.integer("threads", 0));
  s.train.threads = s.threads;
  s.train.seed = s.seed;
  return s;
}

}  // namespace hubmt
