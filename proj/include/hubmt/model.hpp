#pragma once

#include <string>
#include <vector>

#include "hubmt/batching.hpp"
#include "hubmt/ops.hpp"
#include "hubmt/optim.hpp"
#include "hubmt/vocab.hpp"

namespace hubmt {

enum class HeadKind { softmax, continuous };

struct TransformerConfig {
  int64_t layers = 6;
  int64_t model_dim = 300;
  int64_t ff_dim = 1200;
  int64_t heads = 6;
  real dropout = 0.2;
  int64_t rel_pos_clip = 16;
  HeadKind head_kind = HeadKind::softmax;
  real label_smoothing = 0.1;
  real lambda_vmf = 0.2;

  void validate() const;
};

// Pre-norm attention sublayers built from the differentiable primitives.
// q/k/v are [B*H, L, dh]; `allowed` is a constant 0/1 tensor of score shape.
Tensor plain_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& allowed);
// Adds Shaw-style relative position logits (keys only, shared across heads,
// distances clipped to +-clip) before the softmax.
Tensor rel_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& allowed,
                     const Tensor& rel, int64_t clip);

struct EncoderStates {
  Tensor states;  // [rows * src_len, model_dim], final layer-normed
  int64_t rows = 0;
  int64_t src_len = 0;
  std::vector<int32_t> lengths;
};

// Transformer encoder-decoder with relative-position self-attention, shared
// embeddings between encoder/decoder and a tied-softmax or continuous output
// head. Inference entry points are const and safe to share across threads.
class TranslationModel {
 public:
  TranslationModel(TransformerConfig cfg, MultiVocab vocab, uint64_t seed);

  const TransformerConfig& config() const { return cfg_; }
  const MultiVocab& vocab() const { return vocab_; }
  MultiVocab& vocab() { return vocab_; }

  // --- forward ---
  EncoderStates encode(const std::vector<int32_t>& src_ids, const std::vector<int32_t>& lengths,
                       int64_t rows, int64_t src_len) const;
  // Same stack over caller-assembled source vectors (blind decoding feeds
  // aligned hub-space vectors for words that have no vocabulary row).
  EncoderStates encode_embedded(const Tensor& src_vectors, const std::vector<int32_t>& lengths,
                                int64_t rows, int64_t src_len) const;
  // Decoder stack over the gold prefix (teacher forcing); [rows*tgt_len, D].
  Tensor decode_states(const EncoderStates& enc, const std::vector<int32_t>& tgt_in, int64_t rows,
                       int64_t tgt_len) const;

  // Tied output head: logits are exactly states . E^T.
  Tensor output_logits(const Tensor& dec_states) const;
  Tensor output_log_probs(const Tensor& dec_states) const;
  // Continuous head: layer norm then a linear map into the embedding space.
  Tensor predict_vectors(const Tensor& dec_states) const;

  // Loss on one batch (label-smoothed NLL or vMF NLL depending on the head).
  Tensor forward_loss(const Batch& batch);

  // --- single-sentence decode steps (eval mode, no tape) ---
  EncoderStates encode_sentence(const std::vector<int32_t>& src_ids) const;
  std::vector<real> decode_step_logprobs(const EncoderStates& enc,
                                         const std::vector<int32_t>& prefix) const;
  EVec decode_step_vector(const EncoderStates& enc, const std::vector<int32_t>& prefix) const;

  // --- parameters and freezing ---
  std::vector<NamedParam>& parameters() { return params_; }
  const std::vector<NamedParam>& parameters() const { return params_; }
  std::vector<NamedParam> trainable_parameters() const;
  void set_freeze_embeddings(bool on);
  void set_freeze_encoder(bool on);
  bool freeze_embeddings() const { return freeze_embeddings_; }
  bool freeze_encoder() const { return freeze_encoder_; }

  void set_training(bool on) { training_ = on; }
  bool training() const { return training_; }
  Rng& dropout_rng() { return dropout_rng_; }

  // Swap in an extended vocabulary; existing embedding rows must be a prefix
  // of the new matrix. Optimizer state does not carry over.
  void extend_vocab(MultiVocab extended);

  uint64_t encoder_param_hash() const;
  uint64_t embedding_word_rows_hash() const;
  uint64_t all_param_hash() const;

  // Deep copy of parameter values (checkpoint selection keeps the best).
  std::vector<std::vector<real>> snapshot_values() const;
  void restore_values(const std::vector<std::vector<real>>& snap);

 private:
  struct LayerNormP {
    Tensor gain, bias;
  };
  struct AttentionP {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor rel;  // defined only for relative self-attention
  };
  struct FeedForwardP {
    Tensor w1, b1, w2, b2;
  };
  struct EncLayer {
    LayerNormP ln1;
    AttentionP attn;
    LayerNormP ln2;
    FeedForwardP ff;
  };
  struct DecLayer {
    LayerNormP ln1;
    AttentionP self_attn;
    LayerNormP ln2;
    AttentionP cross_attn;
    LayerNormP ln3;
    FeedForwardP ff;
  };

  struct ForwardCtx {
    bool training = false;
    Rng* rng = nullptr;
  };

  Tensor embed_ids(const std::vector<int32_t>& ids) const;
  Tensor self_attn_block(const Tensor& x, const LayerNormP& ln, const AttentionP& at, int64_t rows,
                         int64_t len, const Tensor& allowed, bool relative, ForwardCtx ctx) const;
  Tensor cross_attn_block(const Tensor& x, const LayerNormP& ln, const AttentionP& at,
                          const Tensor& mem, int64_t rows, int64_t q_len, int64_t k_len,
                          const Tensor& allowed, ForwardCtx ctx) const;
  Tensor ff_block(const Tensor& x, const LayerNormP& ln, const FeedForwardP& ff, ForwardCtx ctx) const;
  EncoderStates run_encoder(Tensor x, const std::vector<int32_t>& lengths, int64_t rows,
                            int64_t src_len, ForwardCtx ctx) const;
  Tensor run_decoder(const EncoderStates& enc, const std::vector<int32_t>& tgt_in, int64_t rows,
                     int64_t tgt_len, ForwardCtx ctx) const;

  void register_params();
  ForwardCtx train_ctx() { return {training_, &dropout_rng_}; }

  TransformerConfig cfg_;
  MultiVocab vocab_;
  std::vector<EncLayer> encoder_;
  std::vector<DecLayer> decoder_;
  LayerNormP enc_final_, dec_final_;
  LayerNormP gen_ln_;
  Tensor gen_w_, gen_b_;
  std::vector<NamedParam> params_;
  bool freeze_embeddings_ = true;
  bool freeze_encoder_ = false;
  bool training_ = false;
  Rng dropout_rng_;
};

// Constant 0/1 mask tensors of attention-score shape.
Tensor key_padding_mask(int64_t rows, int64_t heads, int64_t q_len, int64_t k_len,
                        const std::vector<int32_t>& key_lengths);
Tensor causal_mask(int64_t rows, int64_t heads, int64_t len);

}  // namespace hubmt
