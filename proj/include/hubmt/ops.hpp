#pragma once

#include <cstdint>
#include <vector>

#include "hubmt/tensor.hpp"

namespace hubmt {

// Differentiable tensor ops. All of them are exercised by the
// finite-difference suite, so any new op needs an exact backward.

// Matrix product. Supports [m,k]x[k,n], batched [B,m,k]x[B,k,n] and the
// broadcast [B,m,k]x[k,n].
Tensor matmul(const Tensor& a, const Tensor& b);
// a · b^T over the last two dims; same batching rules as matmul.
Tensor matmul_t(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);        // same shape
Tensor add_bias(const Tensor& a, const Tensor& b);   // b is [D], broadcast over rows
Tensor add_scalar(const Tensor& a, real c);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);        // elementwise, same shape
Tensor scale(const Tensor& a, real c);
Tensor relu(const Tensor& a);
Tensor sum_all(const Tensor& a);  // -> scalar [1]

// Softmax over the last dim restricted to mask!=0 entries; masked entries
// output exactly 0. The mask is a constant (no gradient) of the same shape.
Tensor masked_softmax_last(const Tensor& x, const Tensor& mask);
Tensor log_softmax_last(const Tensor& x);

// Layer normalization over the last dim with learnable gain/bias of size [D].
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, real eps = 1e-6);

// Row gather from an embedding matrix [V,D]; backward scatter-adds.
Tensor embedding_rows(const Tensor& table, const std::vector<int32_t>& ids);

// [B*L, H*Dh] -> [B*H, L, Dh] and back. Pure index permutations.
Tensor split_heads(const Tensor& x, int64_t batch, int64_t len, int64_t heads);
Tensor merge_heads(const Tensor& x, int64_t batch, int64_t len, int64_t heads);

Tensor slice_rows(const Tensor& x, int64_t start, int64_t count);

// Relative-position attention logits: out[b,i,j] = q[b,i,:] . rel[clip(j-i,k)+k,:]
// for q [B,L,Dh] and rel [2k+1, Dh].
Tensor rel_position_logits(const Tensor& q, const Tensor& rel, int64_t clip);

// Inverted dropout; identity when training == false.
Tensor dropout(const Tensor& x, real p, Rng& rng, bool training);

// Label-smoothed NLL over log-probabilities [N,V]. include[n]==0 rows (pad)
// are excluded; loss is normalized by the number of included tokens.
Tensor nll_smoothed(const Tensor& log_probs, const std::vector<int32_t>& targets,
                    const std::vector<uint8_t>& include, real smoothing);

// von Mises-Fisher NLL between predicted vectors [N,D] and constant unit
// target rows [N,D]: -log C_m(|e|) - lambda * e.t, token-normalized.
Tensor vmf_nll(const Tensor& predicted, const Tensor& target_units,
               const std::vector<uint8_t>& include, real lambda_vmf);

// log C_m(kappa) for the m-dimensional vMF density, via the uniform
// asymptotic approximation of log I_nu; finite for every finite kappa >= 0.
real vmf_log_norm(real kappa, int64_t m);
real vmf_log_norm_dkappa(real kappa, int64_t m);

}  // namespace hubmt
