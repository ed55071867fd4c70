#include "hubmt/align.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace hubmt {

void BilingualDictionary::add(const std::string& src, const std::string& tgt) {
  if (src.empty() || tgt.empty()) throw DataError("dictionary pair with empty word");
  for (const auto& p : pairs)
    if (p.first == src && p.second == tgt) return;  // no pair duplicated
  pairs.emplace_back(src, tgt);
}

BilingualDictionary BilingualDictionary::load(const std::string& path, const std::string& src_lang,
                                              const std::string& tgt_lang) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dictionary: " + path);
  BilingualDictionary dict{src_lang, tgt_lang, {}};
  std::set<std::pair<std::string, std::string>> seen;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string s, t, extra;
    if (!(ss >> s >> t))
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected \"src_word tgt_word\"");
    if (seen.insert({s, t}).second) dict.pairs.emplace_back(s, t);
  }
  return dict;
}

namespace {

struct ResolvedPairs {
  EMat x;  // N x d raw src rows (unit)
  EMat y;  // N x d raw tgt rows (unit)
  int64_t skipped = 0;
};

ResolvedPairs resolve_pairs(const EmbeddingSpace& src, const EmbeddingSpace& tgt,
                            const BilingualDictionary& dict) {
  std::vector<int32_t> si, ti;
  int64_t skipped = 0;
  for (const auto& [s, t] : dict.pairs) {
    auto a = src.word_index(s);
    auto b = tgt.word_index(t);
    if (a && b) {
      si.push_back(*a);
      ti.push_back(*b);
    } else {
      ++skipped;
    }
  }
  ResolvedPairs out;
  out.skipped = skipped;
  out.x.resize(static_cast<int64_t>(si.size()), src.dim());
  out.y.resize(static_cast<int64_t>(ti.size()), tgt.dim());
  for (size_t i = 0; i < si.size(); ++i) {
    out.x.row(static_cast<int64_t>(i)) = src.vectors().row(si[i]);
    out.y.row(static_cast<int64_t>(i)) = tgt.vectors().row(ti[i]);
  }
  return out;
}

EMat normalized_rows(const EMat& m) {
  EMat out = m;
  for (int64_t i = 0; i < out.rows(); ++i) {
    real n = out.row(i).norm();
    if (n > real(1e-12)) out.row(i) /= n;
  }
  return out;
}

// Vectors of `space` mapped into the hub, rows normalized.
EMat aligned_matrix(const EmbeddingSpace& space, int64_t limit = -1) {
  int64_t rows = limit < 0 ? space.size() : std::min<int64_t>(limit, space.size());
  EMat raw = space.vectors().topRows(rows);
  if (space.has_transform()) raw = raw * space.transform().transpose();
  return normalized_rows(raw);
}

// Mean of the k largest entries per row of a score matrix.
EVec topk_row_mean(const EMat& scores, int k) {
  EVec out(scores.rows());
  std::vector<real> row(static_cast<size_t>(scores.cols()));
  for (int64_t i = 0; i < scores.rows(); ++i) {
    for (int64_t j = 0; j < scores.cols(); ++j) row[static_cast<size_t>(j)] = scores(i, j);
    int kk = std::min<int>(k, static_cast<int>(row.size()));
    std::partial_sort(row.begin(), row.begin() + kk, row.end(), std::greater<real>());
    real s = 0;
    for (int j = 0; j < kk; ++j) s += row[static_cast<size_t>(j)];
    out[i] = s / static_cast<real>(kk);
  }
  return out;
}

std::vector<std::vector<int32_t>> topk_row_indices(const EMat& scores, int k) {
  std::vector<std::vector<int32_t>> out(static_cast<size_t>(scores.rows()));
  std::vector<int32_t> idx(static_cast<size_t>(scores.cols()));
  for (int64_t i = 0; i < scores.rows(); ++i) {
    for (size_t j = 0; j < idx.size(); ++j) idx[j] = static_cast<int32_t>(j);
    int kk = std::min<int>(k, static_cast<int>(idx.size()));
    std::partial_sort(idx.begin(), idx.begin() + kk, idx.end(), [&](int32_t a, int32_t b) {
      real sa = scores(i, a), sb = scores(i, b);
      if (sa != sb) return sa > sb;
      return a < b;
    });
    out[static_cast<size_t>(i)].assign(idx.begin(), idx.begin() + kk);
  }
  return out;
}

// d cos(Wx, y) / d(Wx) for unit y.
EVec cos_grad_u(const EVec& u, const EVec& y) {
  real n = u.norm();
  if (n < real(1e-12)) return EVec::Zero(u.size());
  return y / n - (u.dot(y) / (n * n * n)) * u;
}

}  // namespace

EMat procrustes(const EmbeddingSpace& src, const EmbeddingSpace& tgt,
                const BilingualDictionary& dict, int64_t* skipped_out) {
  if (src.dim() != tgt.dim())
    throw DimensionError("procrustes: dim mismatch " + std::to_string(src.dim()) + " vs " +
                         std::to_string(tgt.dim()));
  ResolvedPairs rp = resolve_pairs(src, tgt, dict);
  if (skipped_out) *skipped_out = rp.skipped;
  if (rp.x.rows() < src.dim())
    throw DataError("procrustes: only " + std::to_string(rp.x.rows()) +
                    " resolvable dictionary pairs for dim " + std::to_string(src.dim()));
  EMat m = rp.y.transpose() * rp.x;  // d x d
  Eigen::JacobiSVD<EMat> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().transpose();
}

real rcsls_criterion(const EMat& w, const EMat& x_pairs, const EMat& y_pairs,
                     const EMat& src_population, const EMat& tgt_population, int k) {
  EMat u = x_pairs * w.transpose();          // N x d mapped pairs
  EMat u_norm = normalized_rows(u);
  EMat ws_norm = normalized_rows(src_population * w.transpose());

  EVec direct(u.rows());
  for (int64_t i = 0; i < u.rows(); ++i) direct[i] = u_norm.row(i).dot(y_pairs.row(i));

  EMat cos_ut = u_norm * tgt_population.transpose();   // N x |T|
  EMat cos_ys = y_pairs * ws_norm.transpose();         // N x |S|
  EVec rt = topk_row_mean(cos_ut, k);
  EVec rs = topk_row_mean(cos_ys, k);

  real total = 0;
  for (int64_t i = 0; i < u.rows(); ++i) total += 2 * direct[i] - rt[i] - rs[i];
  return total / static_cast<real>(u.rows());
}

EMat rcsls_align(const EmbeddingSpace& src, const EmbeddingSpace& tgt,
                 const BilingualDictionary& dict, const AlignOptions& opts) {
  EMat w = procrustes(src, tgt, dict);
  if (opts.rcsls_steps <= 0) return w;

  ResolvedPairs rp = resolve_pairs(src, tgt, dict);
  int64_t pop_s = std::min<int64_t>(opts.neighborhood, src.size());
  int64_t pop_t = std::min<int64_t>(opts.neighborhood, tgt.size());
  EMat s_pop = src.vectors().topRows(pop_s);
  EMat t_pop = tgt.vectors().topRows(pop_t);
  const int k = opts.neighbors;
  const int64_t n = rp.x.rows();
  const int64_t d = src.dim();

  EMat best_w = w;
  real best = rcsls_criterion(w, rp.x, rp.y, s_pop, t_pop, k);
  real lr = opts.rcsls_lr;

  for (int step = 0; step < opts.rcsls_steps && lr > real(1e-6); ++step) {
    EMat u = rp.x * w.transpose();
    EMat u_norm = normalized_rows(u);
    EMat ws = s_pop * w.transpose();
    EMat ws_norm = normalized_rows(ws);

    auto nn_t = topk_row_indices(u_norm * t_pop.transpose(), k);
    auto nn_s = topk_row_indices(rp.y * ws_norm.transpose(), k);

    EMat grad = EMat::Zero(d, d);
    for (int64_t i = 0; i < n; ++i) {
      EVec ui = u.row(i).transpose();
      EVec xi = rp.x.row(i).transpose();
      EVec yi = rp.y.row(i).transpose();
      EVec g = 2 * cos_grad_u(ui, yi);
      for (int32_t j : nn_t[static_cast<size_t>(i)])
        g -= cos_grad_u(ui, t_pop.row(j).transpose()) / static_cast<real>(k);
      grad += g * xi.transpose();
      for (int32_t j : nn_s[static_cast<size_t>(i)]) {
        EVec uj = ws.row(j).transpose();
        grad -= (cos_grad_u(uj, yi) * s_pop.row(j) / static_cast<real>(k));
      }
    }
    grad /= static_cast<real>(n);

    EMat cand = w + lr * grad;
    real val = rcsls_criterion(cand, rp.x, rp.y, s_pop, t_pop, k);
    if (val > best) {
      best = val;
      best_w = cand;
      w = cand;
    } else {
      w = best_w;
      lr /= 2;
    }
  }
  return best_w;
}

std::vector<std::pair<int32_t, real>> csls_rank(const EVec& query, const EmbeddingSpace& space,
                                                int k, const EMat* query_population) {
  if (space.size() == 0) throw DataError("csls_rank: empty embedding space");
  if (k < 1) throw ContractError("csls_rank: k must be >= 1");
  EMat cand = aligned_matrix(space);
  EVec q = query;
  real qn = q.norm();
  if (qn > real(1e-12)) q /= qn;

  EVec cos_q = cand * q;  // candidates are unit rows
  // r_T: query's own neighborhood in the candidate space
  std::vector<real> sorted(cos_q.data(), cos_q.data() + cos_q.size());
  int kk = std::min<int>(k, static_cast<int>(sorted.size()));
  std::partial_sort(sorted.begin(), sorted.begin() + kk, sorted.end(), std::greater<real>());
  real r_t = 0;
  for (int i = 0; i < kk; ++i) r_t += sorted[static_cast<size_t>(i)];
  r_t /= static_cast<real>(kk);

  // r_S per candidate: against the query population when supplied, else the
  // candidate's in-space neighborhood (self excluded).
  EVec r_s(cand.rows());
  if (query_population && query_population->rows() > 0) {
    EMat cos_pop = cand * query_population->transpose();
    r_s = topk_row_mean(cos_pop, k);
  } else {
    EMat cos_cc = cand * cand.transpose();
    for (int64_t i = 0; i < cand.rows(); ++i) {
      std::vector<real> row;
      row.reserve(static_cast<size_t>(cand.rows()) - 1);
      for (int64_t j = 0; j < cand.rows(); ++j)
        if (j != i) row.push_back(cos_cc(i, j));
      int kk2 = std::min<int>(k, static_cast<int>(row.size()));
      if (kk2 == 0) {
        r_s[i] = 0;
        continue;
      }
      std::partial_sort(row.begin(), row.begin() + kk2, row.end(), std::greater<real>());
      real s = 0;
      for (int j = 0; j < kk2; ++j) s += row[static_cast<size_t>(j)];
      r_s[i] = s / static_cast<real>(kk2);
    }
  }

  std::vector<std::pair<int32_t, real>> ranked(static_cast<size_t>(cand.rows()));
  for (int64_t i = 0; i < cand.rows(); ++i)
    ranked[static_cast<size_t>(i)] = {static_cast<int32_t>(i), 2 * cos_q[i] - r_t - r_s[i]};
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return ranked;
}

AlignmentReport evaluate_alignment(const EmbeddingSpace& src, const EmbeddingSpace& tgt,
                                   const BilingualDictionary& dict, int k,
                                   const std::string& method) {
  if (dict.pairs.empty()) throw DataError("evaluate_alignment: empty dictionary");
  EMat src_aligned = aligned_matrix(src);
  EMat tgt_aligned = aligned_matrix(tgt);

  // src word -> acceptable tgt indices
  struct Query {
    int32_t src_idx;
    std::vector<int32_t> answers;
  };
  std::vector<Query> queries;
  std::unordered_map<int32_t, size_t> by_src;
  int64_t resolved = 0;
  for (const auto& [s, t] : dict.pairs) {
    auto a = src.word_index(s);
    auto b = tgt.word_index(t);
    if (!a || !b) continue;
    ++resolved;
    auto it = by_src.find(*a);
    if (it == by_src.end()) {
      by_src[*a] = queries.size();
      queries.push_back({*a, {*b}});
    } else {
      queries[it->second].answers.push_back(*b);
    }
  }
  if (queries.empty()) throw DataError("evaluate_alignment: no resolvable dictionary pairs");

  EMat q_mat(static_cast<int64_t>(queries.size()), src.dim());
  for (size_t i = 0; i < queries.size(); ++i)
    q_mat.row(static_cast<int64_t>(i)) = src_aligned.row(queries[i].src_idx);

  EMat cos = q_mat * tgt_aligned.transpose();  // Q x V
  EVec r_t = topk_row_mean(cos, k);
  EVec r_s = topk_row_mean((tgt_aligned * q_mat.transpose()), k);  // V-sized? no: rows=V

  int64_t nn_hits = 0, csls_hits = 0;
  for (size_t i = 0; i < queries.size(); ++i) {
    int64_t qi = static_cast<int64_t>(i);
    int32_t nn_best = 0, csls_best = 0;
    real nn_score = -2, csls_score = -1e30;
    for (int64_t j = 0; j < tgt_aligned.rows(); ++j) {
      real c = cos(qi, j);
      if (c > nn_score) {
        nn_score = c;
        nn_best = static_cast<int32_t>(j);
      }
      real cs = 2 * c - r_t[qi] - r_s[j];
      if (cs > csls_score) {
        csls_score = cs;
        csls_best = static_cast<int32_t>(j);
      }
    }
    const auto& ans = queries[i].answers;
    if (std::find(ans.begin(), ans.end(), nn_best) != ans.end()) ++nn_hits;
    if (std::find(ans.begin(), ans.end(), csls_best) != ans.end()) ++csls_hits;
  }

  AlignmentReport report;
  report.method = method;
  report.nn_accuracy = static_cast<real>(nn_hits) / static_cast<real>(queries.size());
  report.csls_accuracy = static_cast<real>(csls_hits) / static_cast<real>(queries.size());
  report.dictionary_size = resolved;
  return report;
}

}  // namespace hubmt
