#include "hubmt/noise.hpp"

#include <algorithm>
#include <numeric>

namespace hubmt {

std::vector<std::string> shuffle_noise(const std::vector<std::string>& tokens, int64_t n, Rng& rng) {
  if (n < 0) throw ContractError("shuffle_noise: n must be >= 0");
  if (n == 0 || tokens.size() < 2) return tokens;
  std::vector<std::pair<real, size_t>> keys(tokens.size());
  for (size_t i = 0; i < tokens.size(); ++i)
    keys[i] = {static_cast<real>(i) + rng.uniform() * static_cast<real>(n + 1), i};
  std::stable_sort(keys.begin(), keys.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::string> out(tokens.size());
  for (size_t i = 0; i < tokens.size(); ++i) out[i] = tokens[keys[i].second];
  return out;
}

std::vector<std::string> word_dropout(const std::vector<std::string>& tokens, real p, Rng& rng) {
  if (p < 0 || p >= 1) throw ContractError("word_dropout: p must be in [0,1)");
  if (p == 0 || tokens.empty()) return tokens;
  std::vector<uint8_t> keep(tokens.size());
  bool any = false;
  for (size_t i = 0; i < tokens.size(); ++i) {
    keep[i] = rng.uniform() >= p ? 1 : 0;
    any = any || keep[i];
  }
  if (!any) keep[0] = 1;
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (size_t i = 0; i < tokens.size(); ++i)
    if (keep[i]) out.push_back(tokens[i]);
  return out;
}

std::vector<std::string> apply_noise(const std::vector<std::string>& tokens, const NoiseSpec& spec,
                                     Rng& rng) {
  auto out = shuffle_noise(tokens, spec.shuffle_n, rng);
  if (spec.word_dropout_p > 0) out = word_dropout(out, spec.word_dropout_p, rng);
  return out;
}

}  // namespace hubmt
