#include "hubmt/bleu.hpp"

#include <cmath>
#include <map>

namespace hubmt {

real BleuReport::recompute() const {
  real log_sum = 0;
  for (real p : precisions) {
    if (p <= 0) return 0;
    log_sum += std::log(p);
  }
  return brevity_penalty * std::exp(log_sum / 4) * 100;
}

BleuReport bleu(const std::vector<std::vector<std::string>>& hyp,
                const std::vector<std::vector<std::string>>& ref) {
  if (hyp.size() != ref.size())
    throw DataError("bleu: " + std::to_string(hyp.size()) + " hypotheses vs " +
                    std::to_string(ref.size()) + " references");
  if (hyp.empty()) throw DataError("bleu: empty corpus");

  int64_t matches[4] = {0, 0, 0, 0};
  int64_t totals[4] = {0, 0, 0, 0};
  BleuReport report;

  using Counts = std::map<std::vector<std::string>, int64_t>;
  auto ngram_counts = [](const std::vector<std::string>& sent, size_t n) {
    Counts counts;
    if (sent.size() >= n)
      for (size_t i = 0; i + n <= sent.size(); ++i)
        counts[std::vector<std::string>(sent.begin() + i, sent.begin() + i + n)] += 1;
    return counts;
  };

  for (size_t s = 0; s < hyp.size(); ++s) {
    report.hyp_length += static_cast<int64_t>(hyp[s].size());
    report.ref_length += static_cast<int64_t>(ref[s].size());
    for (size_t n = 1; n <= 4; ++n) {
      Counts h = ngram_counts(hyp[s], n);
      Counts r = ngram_counts(ref[s], n);
      for (const auto& [gram, count] : h) {
        totals[n - 1] += count;
        auto it = r.find(gram);
        if (it != r.end()) matches[n - 1] += std::min(count, it->second);
      }
    }
  }

  for (int n = 0; n < 4; ++n)
    report.precisions[n] =
        totals[n] > 0 ? static_cast<real>(matches[n]) / static_cast<real>(totals[n]) : real(0);

  report.length_ratio = report.ref_length > 0
                            ? static_cast<real>(report.hyp_length) / static_cast<real>(report.ref_length)
                            : real(0);
  report.brevity_penalty =
      (report.hyp_length < report.ref_length && report.hyp_length > 0)
          ? std::exp(real(1) - static_cast<real>(report.ref_length) / static_cast<real>(report.hyp_length))
          : real(1);
  if (report.hyp_length == 0) report.brevity_penalty = 0;
  report.bleu = report.recompute();
  return report;
}

}  // namespace hubmt
