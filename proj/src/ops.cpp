#include "hubmt/ops.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace hubmt {

namespace {

using EMat = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<EMat>;
using CMapM = Eigen::Map<const EMat>;

CMapM map2(const std::vector<real>& v, int64_t rows, int64_t cols, int64_t offset = 0) {
  return CMapM(v.data() + offset, rows, cols);
}
MapM map2(std::vector<real>& v, int64_t rows, int64_t cols, int64_t offset = 0) {
  return MapM(v.data() + offset, rows, cols);
}

struct MatDims {
  int64_t batch;  // 1 for plain 2-D
  int64_t rows;
  int64_t cols;
  bool batched;
};

MatDims mat_dims(const Tensor& t, const char* who) {
  const auto& s = t.shape();
  if (s.size() == 2) return {1, s[0], s[1], false};
  if (s.size() == 3) return {s[0], s[1], s[2], true};
  throw DimensionError(std::string(who) + ": expected 2-D or 3-D tensor, got " + shape_str(s));
}

}  // namespace

static Tensor matmul_impl(const Tensor& a, const Tensor& b, bool trans_b) {
  MatDims da = mat_dims(a, "matmul");
  MatDims db = mat_dims(b, "matmul");
  int64_t b_rows = trans_b ? db.cols : db.rows;
  int64_t b_cols = trans_b ? db.rows : db.cols;
  if (da.cols != b_rows)
    throw DimensionError("matmul: inner extents disagree: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()) + (trans_b ? " (rhs transposed)" : ""));
  if (da.batched && db.batched && da.batch != db.batch)
    throw DimensionError("matmul: batch extents disagree: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  if (!da.batched && db.batched)
    throw DimensionError("matmul: cannot broadcast 2-D lhs over batched rhs: " +
                         shape_str(a.shape()) + " x " + shape_str(b.shape()));

  int64_t batch = da.batch;
  std::vector<int64_t> out_shape = da.batched
                                       ? std::vector<int64_t>{batch, da.rows, b_cols}
                                       : std::vector<int64_t>{da.rows, b_cols};
  std::vector<real> out(static_cast<size_t>(batch * da.rows * b_cols));
  int64_t a_stride = da.rows * da.cols;
  int64_t b_stride = db.batched ? db.rows * db.cols : 0;
  int64_t o_stride = da.rows * b_cols;
  for (int64_t i = 0; i < batch; ++i) {
    auto A = map2(a.values(), da.rows, da.cols, i * a_stride);
    auto B = map2(b.values(), db.rows, db.cols, i * b_stride);
    auto O = map2(out, da.rows, b_cols, i * o_stride);
    if (trans_b)
      O.noalias() = A * B.transpose();
    else
      O.noalias() = A * B;
  }

  auto backward = [da, db, trans_b, batch, a_stride, b_stride, o_stride](TensorNode& node) {
    auto& pa = *node.parents[0];
    auto& pb = *node.parents[1];
    int64_t b_cols = o_stride / da.rows;
    for (int64_t i = 0; i < batch; ++i) {
      auto G = map2(node.grad, da.rows, b_cols, i * o_stride);
      auto A = map2(pa.values, da.rows, da.cols, i * a_stride);
      auto B = map2(pb.values, db.rows, db.cols, i * b_stride);
      if (pa.requires_grad) {
        auto GA = map2(pa.grad, da.rows, da.cols, i * a_stride);
        if (trans_b)
          GA.noalias() += G * B;
        else
          GA.noalias() += G * B.transpose();
      }
      if (pb.requires_grad) {
        auto GB = map2(pb.grad, db.rows, db.cols, i * b_stride);
        if (trans_b)
          GB.noalias() += G.transpose() * A;
        else
          GB.noalias() += A.transpose() * G;
      }
    }
  };
  return make_op_result(std::move(out_shape), std::move(out), {a, b}, std::move(backward));
}

Tensor matmul(const Tensor& a, const Tensor& b) { return matmul_impl(a, b, false); }
Tensor matmul_t(const Tensor& a, const Tensor& b) { return matmul_impl(a, b, true); }

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw DimensionError("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  std::vector<real> out(a.values());
  const auto& bv = b.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  auto backward = [](TensorNode& node) {
    for (int p = 0; p < 2; ++p) {
      auto& par = *node.parents[p];
      if (!par.requires_grad) continue;
      for (size_t i = 0; i < node.grad.size(); ++i) par.grad[i] += node.grad[i];
    }
  };
  return make_op_result(a.shape(), std::move(out), {a, b}, std::move(backward));
}

Tensor add_bias(const Tensor& a, const Tensor& b) {
  if (b.ndim() != 1 || a.ndim() < 1 || a.shape().back() != b.dim(0))
    throw DimensionError("add_bias: " + shape_str(a.shape()) + " vs bias " + shape_str(b.shape()));
  int64_t d = b.dim(0);
  int64_t rows = a.numel() / d;
  std::vector<real> out(a.values());
  const auto& bv = b.values();
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < d; ++c) out[static_cast<size_t>(r * d + c)] += bv[static_cast<size_t>(c)];
  auto backward = [d, rows](TensorNode& node) {
    auto& pa = *node.parents[0];
    auto& pb = *node.parents[1];
    if (pa.requires_grad)
      for (size_t i = 0; i < node.grad.size(); ++i) pa.grad[i] += node.grad[i];
    if (pb.requires_grad)
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < d; ++c)
          pb.grad[static_cast<size_t>(c)] += node.grad[static_cast<size_t>(r * d + c)];
  };
  return make_op_result(a.shape(), std::move(out), {a, b}, std::move(backward));
}

Tensor add_scalar(const Tensor& a, real c) {
  std::vector<real> out(a.values());
  for (auto& v : out) v += c;
  auto backward = [](TensorNode& node) {
    auto& pa = *node.parents[0];
    if (!pa.requires_grad) return;
    for (size_t i = 0; i < node.grad.size(); ++i) pa.grad[i] += node.grad[i];
  };
  return make_op_result(a.shape(), std::move(out), {a}, std::move(backward));
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, real(-1))); }

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw DimensionError("mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  std::vector<real> out(a.values());
  const auto& bv = b.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  auto backward = [](TensorNode& node) {
    auto& pa = *node.parents[0];
    auto& pb = *node.parents[1];
    for (size_t i = 0; i < node.grad.size(); ++i) {
      if (pa.requires_grad) pa.grad[i] += node.grad[i] * pb.values[i];
      if (pb.requires_grad) pb.grad[i] += node.grad[i] * pa.values[i];
    }
  };
  return make_op_result(a.shape(), std::move(out), {a, b}, std::move(backward));
}

Tensor scale(const Tensor& a, real c) {
  std::vector<real> out(a.values());
  for (auto& v : out) v *= c;
  auto backward = [c](TensorNode& node) {
    auto& pa = *node.parents[0];
    if (!pa.requires_grad) return;
    for (size_t i = 0; i < node.grad.size(); ++i) pa.grad[i] += c * node.grad[i];
  };
  return make_op_result(a.shape(), std::move(out), {a}, std::move(backward));
}

Tensor relu(const Tensor& a) {
  std::vector<real> out(a.values());
  for (auto& v : out)
    if (v < real(0)) v = real(0);
  auto backward = [](TensorNode& node) {
    auto& pa = *node.parents[0];
    if (!pa.requires_grad) return;
    for (size_t i = 0; i < node.grad.size(); ++i)
      if (pa.values[i] > real(0)) pa.grad[i] += node.grad[i];
  };
  return make_op_result(a.shape(), std::move(out), {a}, std::move(backward));
}

Tensor sum_all(const Tensor& a) {
  real s = 0;
  for (real v : a.values()) s += v;
  auto backward = [](TensorNode& node) {
    auto& pa = *node.parents[0];
    if (!pa.requires_grad) return;
    real g = node.grad[0];
    for (auto& gv : pa.grad) gv += g;
  };
  return make_op_result({1}, {s}, {a}, std::move(backward));
}

Tensor masked_softmax_last(const Tensor& x, const Tensor& mask) {
  if (x.shape() != mask.shape())
    throw DimensionError("masked_softmax_last: mask shape " + shape_str(mask.shape()) +
                         " must match " + shape_str(x.shape()));
  int64_t d = x.shape().back();
  int64_t rows = x.numel() / d;
  std::vector<real> out(static_cast<size_t>(x.numel()));
  const auto& xv = x.values();
  const auto& mv = mask.values();
  for (int64_t r = 0; r < rows; ++r) {
    int64_t base = r * d;
    real mx = -std::numeric_limits<real>::infinity();
    for (int64_t c = 0; c < d; ++c)
      if (mv[base + c] != real(0)) mx = std::max(mx, xv[base + c]);
    if (mx == -std::numeric_limits<real>::infinity())
      throw ContractError("masked_softmax_last: fully masked row " + std::to_string(r));
    real z = 0;
    for (int64_t c = 0; c < d; ++c) {
      if (mv[base + c] != real(0)) {
        out[base + c] = std::exp(xv[base + c] - mx);
        z += out[base + c];
      } else {
        out[base + c] = real(0);
      }
    }
    for (int64_t c = 0; c < d; ++c) out[base + c] /= z;
  }
  auto backward = [d, rows](TensorNode& node) {
    auto& pa = *node.parents[0];
    if (!pa.requires_grad) return;
    for (int64_t r = 0; r < rows; ++r) {
      int64_t base = r * d;
      real dot = 0;
      for (int64_t c = 0; c < d; ++c) dot += node.grad[base + c] * node.values[base + c];
      for (int64_t c = 0; c < d; ++c)
        pa.grad[base + c] += node.values[base + c] * (node.grad[base + c] - dot);
    }
  };
  return make_op_result(x.shape(), std::move(out), {x, mask}, std::move(backward));
}

Tensor log_softmax_last(const Tensor& x) {
  int64_t d = x.shape().back();
  int64_t rows = x.numel() / d;
  std::vector<real> out(static_cast<size_t>(x.numel()));
  const auto& xv = x.values();
  for (int64_t r = 0; r < rows; ++r) {
    int64_t base = r * d;
    real mx = xv[base];
    for (int64_t c = 1; c < d; ++c) mx = std::max(mx, xv[base + c]);
    real z = 0;
    for (int64_t c = 0; c < d; ++c) z += std::exp(xv[base + c] - mx);
    real lz = mx + std::log(z);
    for (int64_t c = 0; c < d; ++c) out[base + c] = xv[base + c] - lz;
  }
  auto backward = [d, rows](TensorNode& node) {
    auto& pa = *node.parents[0];
    if (!pa.requires_grad) return;
    for (int64_t r = 0; r < rows; ++r) {
      int64_t base = r * d;
      real gsum = 0;
      for (int64_t c = 0; c < d; ++c) gsum += node.grad[base + c];
      for (int64_t c = 0; c < d; ++c)
        pa.grad[base + c] += node.grad[base + c] - std::exp(node.values[base + c]) * gsum;
    }
  };
  return make_op_result(x.shape(), std::move(out), {x}, std::move(backward));
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, real eps) {
  int64_t d = x.shape().back();
  if (gain.ndim() != 1 || gain.dim(0) != d || bias.ndim() != 1 || bias.dim(0) != d)
    throw DimensionError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" +
                         shape_str(bias.shape()) + " vs input " + shape_str(x.shape()));
  int64_t rows = x.numel() / d;
  std::vector<real> out(static_cast<size_t>(x.numel()));
  std::vector<real> inv_std(static_cast<size_t>(rows));
  std::vector<real> xhat(static_cast<size_t>(x.numel()));
  const auto& xv = x.values();
  const auto& gv = gain.values();
  const auto& bv = bias.values();
  for (int64_t r = 0; r < rows; ++r) {
    int64_t base = r * d;
    real mean = 0;
    for (int64_t c = 0; c < d; ++c) mean += xv[base + c];
    mean /= static_cast<real>(d);
    real var = 0;
    for (int64_t c = 0; c < d; ++c) {
      real dv = xv[base + c] - mean;
      var += dv * dv;
    }
    var /= static_cast<real>(d);
    real is = real(1) / std::sqrt(var + eps);
    inv_std[r] = is;
    for (int64_t c = 0; c < d; ++c) {
      xhat[base + c] = (xv[base + c] - mean) * is;
      out[base + c] = xhat[base + c] * gv[c] + bv[c];
    }
  }
  auto backward = [d, rows, inv_std = std::move(inv_std), xhat = std::move(xhat)](TensorNode& node) {
    auto& px = *node.parents[0];
    auto& pg = *node.parents[1];
    auto& pb = *node.parents[2];
    for (int64_t r = 0; r < rows; ++r) {
      int64_t base = r * d;
      real m1 = 0, m2 = 0;  // mean(dxhat), mean(dxhat * xhat)
      for (int64_t c = 0; c < d; ++c) {
        real dy = node.grad[base + c];
        if (pg.requires_grad) pg.grad[c] += dy * xhat[base + c];
        if (pb.requires_grad) pb.grad[c] += dy;
        real dxh = dy * pg.values[c];
        m1 += dxh;
        m2 += dxh * xhat[base + c];
      }
      if (!px.requires_grad) continue;
      m1 /= static_cast<real>(d);
      m2 /= static_cast<real>(d);
      for (int64_t c = 0; c < d; ++c) {
        real dxh = node.grad[base + c] * pg.values[c];
        px.grad[base + c] += inv_std[r] * (dxh - m1 - xhat[base + c] * m2);
      }
    }
  };
  return make_op_result(x.shape(), std::move(out), {x, gain, bias}, std::move(backward));
}

Tensor embedding_rows(const Tensor& table, const std::vector<int32_t>& ids) {
  if (table.ndim() != 2) throw DimensionError("embedding_rows: table must be 2-D");
  int64_t v = table.dim(0), d = table.dim(1);
  int64_t n = static_cast<int64_t>(ids.size());
  std::vector<real> out(static_cast<size_t>(n * d));
  const auto& tv = table.values();
  for (int64_t i = 0; i < n; ++i) {
    int32_t id = ids[i];
    if (id < 0 || id >= v)
      throw ContractError("embedding_rows: id " + std::to_string(id) + " out of range [0," +
                          std::to_string(v) + ")");
    std::copy_n(tv.begin() + static_cast<size_t>(id) * d, d, out.begin() + static_cast<size_t>(i) * d);
  }
  auto backward = [ids, d](TensorNode& node) {
    auto& pt = *node.parents[0];
    if (!pt.requires_grad) return;
    for (size_t i = 0; i < ids.size(); ++i) {
      size_t src = i * static_cast<size_t>(d);
      size_t dst = static_cast<size_t>(ids[i]) * static_cast<size_t>(d);
      for (int64_t c = 0; c < d; ++c) pt.grad[dst + c] += node.grad[src + c];
    }
  };
  return make_op_result({n, d}, std::move(out), {table}, std::move(backward));
}

namespace {

// Index map for split_heads: flat output index -> flat input index.
std::vector<int64_t> head_permutation(int64_t batch, int64_t len, int64_t heads, int64_t dh) {
  std::vector<int64_t> perm(static_cast<size_t>(batch * heads * len * dh));
  int64_t d = heads * dh;
  int64_t out_i = 0;
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t h = 0; h < heads; ++h)
      for (int64_t l = 0; l < len; ++l)
        for (int64_t c = 0; c < dh; ++c) perm[out_i++] = (b * len + l) * d + h * dh + c;
  return perm;
}

}  // namespace

Tensor split_heads(const Tensor& x, int64_t batch, int64_t len, int64_t heads) {
  if (x.ndim() != 2 || x.dim(0) != batch * len || x.dim(1) % heads != 0)
    throw DimensionError("split_heads: input " + shape_str(x.shape()) + " incompatible with batch " +
                         std::to_string(batch) + " len " + std::to_string(len) + " heads " +
                         std::to_string(heads));
  int64_t dh = x.dim(1) / heads;
  auto perm = head_permutation(batch, len, heads, dh);
  std::vector<real> out(perm.size());
  const auto& xv = x.values();
  for (size_t i = 0; i < perm.size(); ++i) out[i] = xv[static_cast<size_t>(perm[i])];
  auto backward = [perm = std::move(perm)](TensorNode& node) {
    auto& pa = *node.parents[0];
    if (!pa.requires_grad) return;
    for (size_t i = 0; i < perm.size(); ++i) pa.grad[static_cast<size_t>(perm[i])] += node.grad[i];
  };
  return make_op_result({batch * heads, len, dh}, std::move(out), {x}, std::move(backward));
}

Tensor merge_heads(const Tensor& x, int64_t batch, int64_t len, int64_t heads) {
  if (x.ndim() != 3 || x.dim(0) != batch * heads || x.dim(1) != len)
    throw DimensionError("merge_heads: input " + shape_str(x.shape()) + " incompatible with batch " +
                         std::to_string(batch) + " len " + std::to_string(len) + " heads " +
                         std::to_string(heads));
  int64_t dh = x.dim(2);
  auto perm = head_permutation(batch, len, heads, dh);  // out(split) index -> merged index
  std::vector<real> out(perm.size());
  const auto& xv = x.values();
  for (size_t i = 0; i < perm.size(); ++i) out[static_cast<size_t>(perm[i])] = xv[i];
  auto backward = [perm = std::move(perm)](TensorNode& node) {
    auto& pa = *node.parents[0];
    if (!pa.requires_grad) return;
    for (size_t i = 0; i < perm.size(); ++i) pa.grad[i] += node.grad[static_cast<size_t>(perm[i])];
  };
  return make_op_result({batch * len, heads * dh}, std::move(out), {x}, std::move(backward));
}

Tensor slice_rows(const Tensor& x, int64_t start, int64_t count) {
  if (x.ndim() != 2) throw DimensionError("slice_rows: expected 2-D, got " + shape_str(x.shape()));
  if (start < 0 || count < 0 || start + count > x.dim(0))
    throw ContractError("slice_rows: range [" + std::to_string(start) + "," +
                        std::to_string(start + count) + ") out of " + std::to_string(x.dim(0)));
  int64_t d = x.dim(1);
  std::vector<real> out(static_cast<size_t>(count * d));
  std::copy_n(x.values().begin() + static_cast<size_t>(start * d), count * d, out.begin());
  auto backward = [start, d](TensorNode& node) {
    auto& pa = *node.parents[0];
    if (!pa.requires_grad) return;
    size_t off = static_cast<size_t>(start * d);
    for (size_t i = 0; i < node.grad.size(); ++i) pa.grad[off + i] += node.grad[i];
  };
  return make_op_result({count, d}, std::move(out), {x}, std::move(backward));
}

Tensor rel_position_logits(const Tensor& q, const Tensor& rel, int64_t clip) {
  if (q.ndim() != 3) throw DimensionError("rel_position_logits: q must be 3-D, got " + shape_str(q.shape()));
  if (rel.ndim() != 2 || rel.dim(0) != 2 * clip + 1 || rel.dim(1) != q.dim(2))
    throw DimensionError("rel_position_logits: rel " + shape_str(rel.shape()) +
                         " incompatible with q " + shape_str(q.shape()) + " clip " +
                         std::to_string(clip));
  int64_t b = q.dim(0), l = q.dim(1), dh = q.dim(2);
  std::vector<real> out(static_cast<size_t>(b * l * l));
  const auto& qv = q.values();
  const auto& rv = rel.values();
  for (int64_t bi = 0; bi < b; ++bi)
    for (int64_t i = 0; i < l; ++i) {
      const real* qp = qv.data() + (bi * l + i) * dh;
      for (int64_t j = 0; j < l; ++j) {
        int64_t bucket = std::clamp(j - i, -clip, clip) + clip;
        const real* rp = rv.data() + bucket * dh;
        real s = 0;
        for (int64_t c = 0; c < dh; ++c) s += qp[c] * rp[c];
        out[static_cast<size_t>((bi * l + i) * l + j)] = s;
      }
    }
  auto backward = [b, l, dh, clip](TensorNode& node) {
    auto& pq = *node.parents[0];
    auto& pr = *node.parents[1];
    for (int64_t bi = 0; bi < b; ++bi)
      for (int64_t i = 0; i < l; ++i) {
        const real* qp = pq.values.data() + (bi * l + i) * dh;
        real* qg = pq.requires_grad ? pq.grad.data() + (bi * l + i) * dh : nullptr;
        for (int64_t j = 0; j < l; ++j) {
          real g = node.grad[static_cast<size_t>((bi * l + i) * l + j)];
          if (g == real(0)) continue;
          int64_t bucket = std::clamp(j - i, -clip, clip) + clip;
          const real* rp = pr.values.data() + bucket * dh;
          real* rg = pr.requires_grad ? pr.grad.data() + bucket * dh : nullptr;
          for (int64_t c = 0; c < dh; ++c) {
            if (qg) qg[c] += g * rp[c];
            if (rg) rg[c] += g * qp[c];
          }
        }
      }
  };
  return make_op_result({b, l, l}, std::move(out), {q, rel}, std::move(backward));
}

Tensor dropout(const Tensor& x, real p, Rng& rng, bool training) {
  if (!training || p <= real(0)) return x;
  if (p >= real(1)) throw ContractError("dropout: p must be < 1");
  real keep = real(1) - p;
  std::vector<real> mask(static_cast<size_t>(x.numel()));
  for (auto& m : mask) m = rng.uniform() < p ? real(0) : real(1) / keep;
  std::vector<real> out(x.values());
  for (size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  auto backward = [mask = std::move(mask)](TensorNode& node) {
    auto& pa = *node.parents[0];
    if (!pa.requires_grad) return;
    for (size_t i = 0; i < node.grad.size(); ++i) pa.grad[i] += node.grad[i] * mask[i];
  };
  return make_op_result(x.shape(), std::move(out), {x}, std::move(backward));
}

Tensor nll_smoothed(const Tensor& log_probs, const std::vector<int32_t>& targets,
                    const std::vector<uint8_t>& include, real smoothing) {
  if (log_probs.ndim() != 2)
    throw DimensionError("nll_smoothed: log_probs must be [N,V], got " + shape_str(log_probs.shape()));
  int64_t n = log_probs.dim(0), v = log_probs.dim(1);
  if (static_cast<int64_t>(targets.size()) != n || static_cast<int64_t>(include.size()) != n)
    throw DimensionError("nll_smoothed: targets/include length mismatch");
  int64_t tokens = 0;
  for (uint8_t w : include) tokens += w ? 1 : 0;
  if (tokens == 0) throw ContractError("nll_smoothed: target contains pad only");

  real off = v > 1 ? smoothing / static_cast<real>(v - 1) : real(0);
  real on = real(1) - smoothing;
  const auto& lp = log_probs.values();
  real loss = 0;
  for (int64_t i = 0; i < n; ++i) {
    if (!include[i]) continue;
    int32_t y = targets[i];
    if (y < 0 || y >= v) throw ContractError("nll_smoothed: target id out of range");
    real row = 0;
    if (off != real(0)) {
      for (int64_t c = 0; c < v; ++c) row += lp[static_cast<size_t>(i * v + c)];
      row = off * (row - lp[static_cast<size_t>(i * v + y)]);
    }
    loss -= on * lp[static_cast<size_t>(i * v + y)] + row;
  }
  loss /= static_cast<real>(tokens);

  auto backward = [targets, include, on, off, n, v, tokens](TensorNode& node) {
    auto& pa = *node.parents[0];
    if (!pa.requires_grad) return;
    real g = node.grad[0] / static_cast<real>(tokens);
    for (int64_t i = 0; i < n; ++i) {
      if (!include[i]) continue;
      size_t base = static_cast<size_t>(i * v);
      if (off != real(0))
        for (int64_t c = 0; c < v; ++c) pa.grad[base + c] -= g * off;
      pa.grad[base + targets[i]] -= g * (on - off);
    }
  };
  return make_op_result({1}, {loss}, {log_probs}, std::move(backward));
}

real vmf_log_norm(real kappa, int64_t m) {
  // log C_m(kappa) with log I_nu replaced by its uniform asymptotic form;
  // the kappa->0 singularities cancel, so the result is finite everywhere.
  real nu = static_cast<real>(m) / 2 - 1;
  real s = std::sqrt(nu * nu + kappa * kappa);
  real two_pi = real(2) * real(3.14159265358979323846);
  return -(static_cast<real>(m) - 1) / 2 * std::log(two_pi) + real(0.25) * std::log(nu * nu + kappa * kappa) -
         s + nu * std::log(nu + s);
}

real vmf_log_norm_dkappa(real kappa, int64_t m) {
  real nu = static_cast<real>(m) / 2 - 1;
  real s2 = nu * nu + kappa * kappa;
  real s = std::sqrt(s2);
  return kappa / (2 * s2) - kappa / (nu + s);
}

Tensor vmf_nll(const Tensor& predicted, const Tensor& target_units,
               const std::vector<uint8_t>& include, real lambda_vmf) {
  if (predicted.ndim() != 2 || predicted.shape() != target_units.shape())
    throw DimensionError("vmf_nll: predicted " + shape_str(predicted.shape()) + " vs targets " +
                         shape_str(target_units.shape()));
  int64_t n = predicted.dim(0), d = predicted.dim(1);
  if (static_cast<int64_t>(include.size()) != n)
    throw DimensionError("vmf_nll: include length mismatch");
  int64_t tokens = 0;
  for (uint8_t w : include) tokens += w ? 1 : 0;
  if (tokens == 0) throw ContractError("vmf_nll: target contains pad only");

  const real kappa_floor = 1e-8;
  const auto& ev = predicted.values();
  const auto& tv = target_units.values();
  real loss = 0;
  for (int64_t i = 0; i < n; ++i) {
    if (!include[i]) continue;
    size_t base = static_cast<size_t>(i * d);
    real norm2 = 0, dot = 0;
    for (int64_t c = 0; c < d; ++c) {
      norm2 += ev[base + c] * ev[base + c];
      dot += ev[base + c] * tv[base + c];
    }
    real kappa = std::max(std::sqrt(norm2), kappa_floor);
    loss += -vmf_log_norm(kappa, d) - lambda_vmf * dot;
  }
  loss /= static_cast<real>(tokens);

  auto backward = [include, lambda_vmf, n, d, tokens, kappa_floor](TensorNode& node) {
    auto& pe = *node.parents[0];
    auto& pt = *node.parents[1];
    if (!pe.requires_grad) return;
    real g = node.grad[0] / static_cast<real>(tokens);
    for (int64_t i = 0; i < n; ++i) {
      if (!include[i]) continue;
      size_t base = static_cast<size_t>(i * d);
      real norm2 = 0;
      for (int64_t c = 0; c < d; ++c) norm2 += pe.values[base + c] * pe.values[base + c];
      real raw_norm = std::sqrt(norm2);
      real kappa = std::max(raw_norm, kappa_floor);
      real dnorm = raw_norm > kappa_floor ? -vmf_log_norm_dkappa(kappa, d) / kappa : real(0);
      for (int64_t c = 0; c < d; ++c)
        pe.grad[base + c] += g * (dnorm * pe.values[base + c] - lambda_vmf * pt.values[base + c]);
    }
  };
  return make_op_result({1}, {loss}, {predicted, target_units}, std::move(backward));
}

}  // namespace hubmt
