#include "hubmt/model.hpp"

#include <cmath>

namespace hubmt {

void TransformerConfig::validate() const {
  if (layers <= 0 || model_dim <= 0 || ff_dim <= 0 || heads <= 0)
    throw ConfigError("transformer config: dimensions must be positive");
  if (model_dim % heads != 0)
    throw ConfigError("transformer config: model_dim " + std::to_string(model_dim) +
                      " not divisible by heads " + std::to_string(heads));
  if (rel_pos_clip < 1) throw ConfigError("transformer config: rel_pos_clip must be >= 1");
  if (dropout < 0 || dropout >= 1) throw ConfigError("transformer config: dropout must be in [0,1)");
}

Tensor plain_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& allowed) {
  int64_t dh = q.shape().back();
  Tensor scores = scale(matmul_t(q, k), real(1) / std::sqrt(static_cast<real>(dh)));
  Tensor probs = masked_softmax_last(scores, allowed);
  return matmul(probs, v);
}

Tensor rel_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& allowed,
                     const Tensor& rel, int64_t clip) {
  int64_t dh = q.shape().back();
  Tensor scores = scale(add(matmul_t(q, k), rel_position_logits(q, rel, clip)),
                        real(1) / std::sqrt(static_cast<real>(dh)));
  Tensor probs = masked_softmax_last(scores, allowed);
  return matmul(probs, v);
}

Tensor key_padding_mask(int64_t rows, int64_t heads, int64_t q_len, int64_t k_len,
                        const std::vector<int32_t>& key_lengths) {
  Tensor mask = Tensor::zeros({rows * heads, q_len, k_len});
  auto& mv = mask.values();
  for (int64_t b = 0; b < rows; ++b) {
    int64_t len = key_lengths[static_cast<size_t>(b)];
    for (int64_t h = 0; h < heads; ++h) {
      int64_t base = (b * heads + h) * q_len * k_len;
      for (int64_t i = 0; i < q_len; ++i)
        for (int64_t j = 0; j < len; ++j) mv[static_cast<size_t>(base + i * k_len + j)] = 1;
    }
  }
  return mask;
}

Tensor causal_mask(int64_t rows, int64_t heads, int64_t len) {
  Tensor mask = Tensor::zeros({rows * heads, len, len});
  auto& mv = mask.values();
  for (int64_t bh = 0; bh < rows * heads; ++bh) {
    int64_t base = bh * len * len;
    for (int64_t i = 0; i < len; ++i)
      for (int64_t j = 0; j <= i; ++j) mv[static_cast<size_t>(base + i * len + j)] = 1;
  }
  return mask;
}

namespace {

Tensor make_bias(int64_t n) { return Tensor::zeros({n}, true); }
Tensor make_gain(int64_t n, real value = 1.0) { return Tensor::full({n}, value, true); }

}  // namespace

TranslationModel::TranslationModel(TransformerConfig cfg, MultiVocab vocab, uint64_t seed)
    : cfg_(cfg), vocab_(std::move(vocab)), dropout_rng_(seed ^ 0x9e3779b97f4a7c15ull) {
  cfg_.validate();
  if (vocab_.dim() != cfg_.model_dim)
    throw ConfigError("model_dim " + std::to_string(cfg_.model_dim) +
                      " must equal embedding dim " + std::to_string(vocab_.dim()) +
                      " (embeddings are tied to the hub space)");
  Rng rng(seed);
  int64_t d = cfg_.model_dim;
  int64_t dh = d / cfg_.heads;
  int64_t rel_rows = 2 * cfg_.rel_pos_clip + 1;

  auto make_attn = [&](bool relative) {
    AttentionP at;
    at.wq = Tensor::glorot(d, d, rng);
    at.bq = make_bias(d);
    at.wk = Tensor::glorot(d, d, rng);
    at.bk = make_bias(d);
    at.wv = Tensor::glorot(d, d, rng);
    at.bv = make_bias(d);
    at.wo = Tensor::glorot(d, d, rng);
    at.bo = make_bias(d);
    if (relative) at.rel = Tensor::glorot(rel_rows, dh, rng);
    return at;
  };
  auto make_ln = [&](real gain = 1.0) { return LayerNormP{make_gain(d, gain), make_bias(d)}; };
  auto make_ff = [&] {
    FeedForwardP ff;
    ff.w1 = Tensor::glorot(d, cfg_.ff_dim, rng);
    ff.b1 = make_bias(cfg_.ff_dim);
    ff.w2 = Tensor::glorot(cfg_.ff_dim, d, rng);
    ff.b2 = make_bias(d);
    return ff;
  };

  for (int64_t l = 0; l < cfg_.layers; ++l)
    encoder_.push_back({make_ln(), make_attn(true), make_ln(), make_ff()});
  for (int64_t l = 0; l < cfg_.layers; ++l)
    decoder_.push_back({make_ln(), make_attn(true), make_ln(), make_attn(false), make_ln(), make_ff()});
  enc_final_ = make_ln();
  // Small initial decoder output scale keeps the untrained tied head close
  // to a uniform distribution over the vocabulary.
  dec_final_ = make_ln(real(1) / std::sqrt(static_cast<real>(d)));
  gen_ln_ = make_ln();
  gen_w_ = Tensor::glorot(d, d, rng);
  gen_b_ = make_bias(d);

  vocab_.embedding().set_requires_grad(true);
  register_params();
  set_freeze_embeddings(true);
}

void TranslationModel::register_params() {
  params_.clear();
  auto reg = [&](const std::string& name, Tensor t) {
    t.set_requires_grad(true);
    params_.push_back({name, t});
  };
  params_.push_back({"embedding", vocab_.embedding()});
  auto reg_attn = [&](const std::string& prefix, AttentionP& at) {
    reg(prefix + ".wq", at.wq);
    reg(prefix + ".bq", at.bq);
    reg(prefix + ".wk", at.wk);
    reg(prefix + ".bk", at.bk);
    reg(prefix + ".wv", at.wv);
    reg(prefix + ".bv", at.bv);
    reg(prefix + ".wo", at.wo);
    reg(prefix + ".bo", at.bo);
    if (at.rel.defined()) reg(prefix + ".rel", at.rel);
  };
  auto reg_ln = [&](const std::string& prefix, LayerNormP& ln) {
    reg(prefix + ".gain", ln.gain);
    reg(prefix + ".bias", ln.bias);
  };
  auto reg_ff = [&](const std::string& prefix, FeedForwardP& ff) {
    reg(prefix + ".w1", ff.w1);
    reg(prefix + ".b1", ff.b1);
    reg(prefix + ".w2", ff.w2);
    reg(prefix + ".b2", ff.b2);
  };
  for (size_t l = 0; l < encoder_.size(); ++l) {
    std::string p = "enc." + std::to_string(l);
    reg_ln(p + ".ln1", encoder_[l].ln1);
    reg_attn(p + ".attn", encoder_[l].attn);
    reg_ln(p + ".ln2", encoder_[l].ln2);
    reg_ff(p + ".ff", encoder_[l].ff);
  }
  reg_ln("enc.final", enc_final_);
  for (size_t l = 0; l < decoder_.size(); ++l) {
    std::string p = "dec." + std::to_string(l);
    reg_ln(p + ".ln1", decoder_[l].ln1);
    reg_attn(p + ".self", decoder_[l].self_attn);
    reg_ln(p + ".ln2", decoder_[l].ln2);
    reg_attn(p + ".cross", decoder_[l].cross_attn);
    reg_ln(p + ".ln3", decoder_[l].ln3);
    reg_ff(p + ".ff", decoder_[l].ff);
  }
  reg_ln("dec.final", dec_final_);
  reg_ln("gen.ln", gen_ln_);
  reg("gen.w", gen_w_);
  reg("gen.b", gen_b_);
}

void TranslationModel::set_freeze_embeddings(bool on) {
  freeze_embeddings_ = on;
  vocab_.embedding().set_freeze_mask(on ? vocab_.make_embedding_freeze_mask() : nullptr);
  vocab_.set_frozen(on);
}

void TranslationModel::set_freeze_encoder(bool on) {
  freeze_encoder_ = on;
  for (auto& p : params_)
    if (p.name.rfind("enc.", 0) == 0) p.tensor.set_requires_grad(!on);
}

std::vector<NamedParam> TranslationModel::trainable_parameters() const {
  std::vector<NamedParam> out;
  for (const auto& p : params_) {
    if (!p.tensor.requires_grad()) continue;
    if (cfg_.head_kind == HeadKind::softmax && p.name.rfind("gen.", 0) == 0) continue;
    out.push_back(p);
  }
  return out;
}

Tensor TranslationModel::embed_ids(const std::vector<int32_t>& ids) const {
  return embedding_rows(vocab_.embedding(), ids);
}

Tensor TranslationModel::self_attn_block(const Tensor& x, const LayerNormP& ln, const AttentionP& at,
                                         int64_t rows, int64_t len, const Tensor& allowed,
                                         bool relative, ForwardCtx ctx) const {
  Tensor xn = layer_norm(x, ln.gain, ln.bias);
  Tensor q = split_heads(add_bias(matmul(xn, at.wq), at.bq), rows, len, cfg_.heads);
  Tensor k = split_heads(add_bias(matmul(xn, at.wk), at.bk), rows, len, cfg_.heads);
  Tensor v = split_heads(add_bias(matmul(xn, at.wv), at.bv), rows, len, cfg_.heads);
  Tensor ctx_heads = relative ? rel_attention(q, k, v, allowed, at.rel, cfg_.rel_pos_clip)
                              : plain_attention(q, k, v, allowed);
  Tensor merged = merge_heads(ctx_heads, rows, len, cfg_.heads);
  Tensor out = add_bias(matmul(merged, at.wo), at.bo);
  if (ctx.rng) out = dropout(out, cfg_.dropout, *ctx.rng, ctx.training);
  return add(x, out);
}

Tensor TranslationModel::cross_attn_block(const Tensor& x, const LayerNormP& ln, const AttentionP& at,
                                          const Tensor& mem, int64_t rows, int64_t q_len,
                                          int64_t k_len, const Tensor& allowed, ForwardCtx ctx) const {
  Tensor xn = layer_norm(x, ln.gain, ln.bias);
  Tensor q = split_heads(add_bias(matmul(xn, at.wq), at.bq), rows, q_len, cfg_.heads);
  Tensor k = split_heads(add_bias(matmul(mem, at.wk), at.bk), rows, k_len, cfg_.heads);
  Tensor v = split_heads(add_bias(matmul(mem, at.wv), at.bv), rows, k_len, cfg_.heads);
  Tensor ctx_heads = plain_attention(q, k, v, allowed);
  Tensor merged = merge_heads(ctx_heads, rows, q_len, cfg_.heads);
  Tensor out = add_bias(matmul(merged, at.wo), at.bo);
  if (ctx.rng) out = dropout(out, cfg_.dropout, *ctx.rng, ctx.training);
  return add(x, out);
}

Tensor TranslationModel::ff_block(const Tensor& x, const LayerNormP& ln, const FeedForwardP& ff,
                                  ForwardCtx ctx) const {
  Tensor xn = layer_norm(x, ln.gain, ln.bias);
  Tensor h = relu(add_bias(matmul(xn, ff.w1), ff.b1));
  Tensor out = add_bias(matmul(h, ff.w2), ff.b2);
  if (ctx.rng) out = dropout(out, cfg_.dropout, *ctx.rng, ctx.training);
  return add(x, out);
}

EncoderStates TranslationModel::run_encoder(Tensor x, const std::vector<int32_t>& lengths,
                                            int64_t rows, int64_t src_len, ForwardCtx ctx) const {
  Tensor allowed = key_padding_mask(rows, cfg_.heads, src_len, src_len, lengths);
  for (const auto& layer : encoder_) {
    x = self_attn_block(x, layer.ln1, layer.attn, rows, src_len, allowed, true, ctx);
    x = ff_block(x, layer.ln2, layer.ff, ctx);
  }
  EncoderStates enc;
  enc.states = layer_norm(x, enc_final_.gain, enc_final_.bias);
  enc.rows = rows;
  enc.src_len = src_len;
  enc.lengths = lengths;
  return enc;
}

EncoderStates TranslationModel::encode(const std::vector<int32_t>& src_ids,
                                       const std::vector<int32_t>& lengths, int64_t rows,
                                       int64_t src_len) const {
  return run_encoder(embed_ids(src_ids), lengths, rows, src_len, {});
}

EncoderStates TranslationModel::encode_embedded(const Tensor& src_vectors,
                                                const std::vector<int32_t>& lengths, int64_t rows,
                                                int64_t src_len) const {
  return run_encoder(src_vectors, lengths, rows, src_len, {});
}

Tensor TranslationModel::run_decoder(const EncoderStates& enc, const std::vector<int32_t>& tgt_in,
                                     int64_t rows, int64_t tgt_len, ForwardCtx ctx) const {
  Tensor x = embed_ids(tgt_in);
  Tensor self_allowed = causal_mask(rows, cfg_.heads, tgt_len);
  Tensor cross_allowed = key_padding_mask(rows, cfg_.heads, tgt_len, enc.src_len, enc.lengths);
  for (const auto& layer : decoder_) {
    x = self_attn_block(x, layer.ln1, layer.self_attn, rows, tgt_len, self_allowed, true, ctx);
    x = cross_attn_block(x, layer.ln2, layer.cross_attn, enc.states, rows, tgt_len, enc.src_len,
                         cross_allowed, ctx);
    x = ff_block(x, layer.ln3, layer.ff, ctx);
  }
  return layer_norm(x, dec_final_.gain, dec_final_.bias);
}

Tensor TranslationModel::decode_states(const EncoderStates& enc, const std::vector<int32_t>& tgt_in,
                                       int64_t rows, int64_t tgt_len) const {
  return run_decoder(enc, tgt_in, rows, tgt_len, {});
}

Tensor TranslationModel::output_logits(const Tensor& dec_states) const {
  return matmul_t(dec_states, vocab_.embedding());
}

Tensor TranslationModel::output_log_probs(const Tensor& dec_states) const {
  return log_softmax_last(output_logits(dec_states));
}

Tensor TranslationModel::predict_vectors(const Tensor& dec_states) const {
  Tensor h = layer_norm(dec_states, gen_ln_.gain, gen_ln_.bias);
  return add_bias(matmul(h, gen_w_), gen_b_);
}

Tensor TranslationModel::forward_loss(const Batch& batch) {
  ForwardCtx ctx = train_ctx();
  bool frozen_front = freeze_encoder_ && freeze_embeddings_;
  EncoderStates enc;
  if (frozen_front) {
    // Frozen encoder + frozen embeddings: nothing upstream of the decoder
    // can train, so skip tape construction for the whole encoder pass.
    NoGradGuard guard;
    enc = run_encoder(embed_ids(batch.src), batch.src_lengths, batch.rows, batch.src_len, ctx);
    enc.states = enc.states.clone_detached();
  } else {
    enc = run_encoder(embed_ids(batch.src), batch.src_lengths, batch.rows, batch.src_len, ctx);
  }
  Tensor dec = run_decoder(enc, batch.tgt_in, batch.rows, batch.tgt_len, ctx);
  if (cfg_.head_kind == HeadKind::softmax) {
    Tensor lp = output_log_probs(dec);
    return nll_smoothed(lp, batch.tgt_out, batch.tgt_include, cfg_.label_smoothing);
  }
  Tensor predicted = predict_vectors(dec);
  // Targets are the frozen rows, unit-normalized, detached from the tape.
  Tensor targets;
  {
    NoGradGuard guard;
    targets = embedding_rows(vocab_.embedding(), batch.tgt_out);
    auto& tv = targets.values();
    int64_t d = cfg_.model_dim;
    for (int64_t i = 0; i < targets.dim(0); ++i) {
      real norm = 0;
      for (int64_t c = 0; c < d; ++c) norm += tv[static_cast<size_t>(i * d + c)] * tv[static_cast<size_t>(i * d + c)];
      norm = std::sqrt(norm);
      if (norm > real(1e-12))
        for (int64_t c = 0; c < d; ++c) tv[static_cast<size_t>(i * d + c)] /= norm;
    }
  }
  return vmf_nll(predicted, targets, batch.tgt_include, cfg_.lambda_vmf);
}

EncoderStates TranslationModel::encode_sentence(const std::vector<int32_t>& src_ids) const {
  NoGradGuard guard;
  std::vector<int32_t> lengths{static_cast<int32_t>(src_ids.size())};
  return encode(src_ids, lengths, 1, static_cast<int64_t>(src_ids.size()));
}

std::vector<real> TranslationModel::decode_step_logprobs(const EncoderStates& enc,
                                                         const std::vector<int32_t>& prefix) const {
  if (prefix.empty()) throw ContractError("decode_step: empty prefix");
  if (prefix.front() != vocab_.bos_id()) throw ContractError("decode_step: prefix must begin with <bos>");
  NoGradGuard guard;
  Tensor dec = decode_states(enc, prefix, 1, static_cast<int64_t>(prefix.size()));
  Tensor last = slice_rows(dec, static_cast<int64_t>(prefix.size()) - 1, 1);
  Tensor lp = output_log_probs(last);
  return lp.values();
}

EVec TranslationModel::decode_step_vector(const EncoderStates& enc,
                                          const std::vector<int32_t>& prefix) const {
  if (prefix.empty()) throw ContractError("decode_step: empty prefix");
  if (prefix.front() != vocab_.bos_id()) throw ContractError("decode_step: prefix must begin with <bos>");
  NoGradGuard guard;
  Tensor dec = decode_states(enc, prefix, 1, static_cast<int64_t>(prefix.size()));
  Tensor last = slice_rows(dec, static_cast<int64_t>(prefix.size()) - 1, 1);
  Tensor predicted = predict_vectors(last);
  EVec out(cfg_.model_dim);
  for (int64_t c = 0; c < cfg_.model_dim; ++c) out[c] = predicted.values()[static_cast<size_t>(c)];
  return out;
}

void TranslationModel::extend_vocab(MultiVocab extended) {
  if (extended.size() < vocab_.size() || extended.dim() != vocab_.dim())
    throw ContractError("extend_vocab: extended vocabulary must grow the current one");
  vocab_ = std::move(extended);
  vocab_.embedding().set_requires_grad(true);
  register_params();
  set_freeze_embeddings(freeze_embeddings_);
  set_freeze_encoder(freeze_encoder_);
}

uint64_t TranslationModel::encoder_param_hash() const {
  uint64_t h = 1469598103934665603ull;
  for (const auto& p : params_)
    if (p.name.rfind("enc.", 0) == 0) h = fnv1a64(p.tensor.values(), h);
  return h;
}

uint64_t TranslationModel::embedding_word_rows_hash() const {
  uint64_t h = 1469598103934665603ull;
  const auto& vals = vocab_.embedding().values();
  int64_t d = vocab_.dim();
  for (int64_t i = 0; i < vocab_.size(); ++i) {
    if (vocab_.is_special(static_cast<int32_t>(i))) continue;
    h = fnv1a64(vals.data() + i * d, static_cast<size_t>(d) * sizeof(real), h);
  }
  return h;
}

uint64_t TranslationModel::all_param_hash() const {
  uint64_t h = 1469598103934665603ull;
  for (const auto& p : params_) h = fnv1a64(p.tensor.values(), h);
  return h;
}

std::vector<std::vector<real>> TranslationModel::snapshot_values() const {
  std::vector<std::vector<real>> snap;
  snap.reserve(params_.size());
  for (const auto& p : params_) snap.push_back(p.tensor.values());
  return snap;
}

void TranslationModel::restore_values(const std::vector<std::vector<real>>& snap) {
  if (snap.size() != params_.size())
    throw ContractError("restore_values: snapshot size mismatch");
  for (size_t i = 0; i < snap.size(); ++i) {
    if (snap[i].size() != params_[i].tensor.values().size())
      throw ContractError("restore_values: parameter '" + params_[i].name + "' changed shape");
    params_[i].tensor.values() = snap[i];
  }
}

}  // namespace hubmt
