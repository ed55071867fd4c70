#include "hubmt/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace hubmt {

uint32_t crc32(const void* data, size_t len, uint32_t seed) {
  static uint32_t table[256];
  static bool init = false;
  if (!init) {
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      table[i] = c;
    }
    init = true;
  }
  uint32_t crc = seed ^ 0xFFFFFFFFu;
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) crc = table[(crc ^ p[i]) & 0xFF] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

namespace {

constexpr char kMagic[8] = {'H', 'M', 'T', 'C', 'K', 'P', 'T', '1'};
constexpr uint32_t kVersion = 1;

class Writer {
 public:
  void u8(uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(uint32_t v) { raw(&v, 4); }
  void i64(int64_t v) { raw(&v, 8); }
  void f64(double v) { raw(&v, 8); }
  void str(const std::string& s) {
    i64(static_cast<int64_t>(s.size()));
    buf_.append(s);
  }
  void reals(const std::vector<real>& v) {
    i64(static_cast<int64_t>(v.size()));
    for (real x : v) f64(static_cast<double>(x));
  }
  void raw(const void* p, size_t n) { buf_.append(static_cast<const char*>(p), n); }
  const std::string& buffer() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(std::string data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}
  uint8_t u8() { return static_cast<uint8_t>(take(1)[0]); }
  uint32_t u32() {
    uint32_t v;
    std::memcpy(&v, take(4), 4);
    return v;
  }
  int64_t i64() {
    int64_t v;
    std::memcpy(&v, take(8), 8);
    return v;
  }
  double f64() {
    double v;
    std::memcpy(&v, take(8), 8);
    return v;
  }
  std::string str() {
    int64_t n = i64();
    check_len(n);
    return std::string(take(static_cast<size_t>(n)), static_cast<size_t>(n));
  }
  std::vector<real> reals() {
    int64_t n = i64();
    check_len(n * 8);
    std::vector<real> out(static_cast<size_t>(n));
    for (auto& x : out) x = static_cast<real>(f64());
    return out;
  }
  size_t pos() const { return pos_; }
  const std::string& data() const { return data_; }

 private:
  void check_len(int64_t n) {
    if (n < 0 || pos_ + static_cast<size_t>(n) > data_.size())
      throw FormatError(path_ + ": truncated checkpoint");
  }
  const char* take(size_t n) {
    if (pos_ + n > data_.size()) throw FormatError(path_ + ": truncated checkpoint");
    const char* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::string data_;
  std::string path_;
  size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const TranslationModel& m, const Optimizer* opt, int64_t step,
                     const std::string& path) {
  Writer w;
  w.raw(kMagic, 8);
  w.u32(kVersion);

  const TransformerConfig& cfg = m.config();
  w.i64(cfg.layers);
  w.i64(cfg.model_dim);
  w.i64(cfg.ff_dim);
  w.i64(cfg.heads);
  w.f64(cfg.dropout);
  w.i64(cfg.rel_pos_clip);
  w.u8(cfg.head_kind == HeadKind::continuous ? 1 : 0);
  w.f64(cfg.label_smoothing);
  w.f64(cfg.lambda_vmf);

  const MultiVocab& v = m.vocab();
  w.i64(v.size());
  for (const auto& tok : v.tokens()) w.str(tok);
  w.i64(v.dim());
  w.u8(v.frozen() ? 1 : 0);

  w.u8(m.freeze_embeddings() ? 1 : 0);
  w.u8(m.freeze_encoder() ? 1 : 0);
  w.i64(step);

  const auto& params = m.parameters();
  w.i64(static_cast<int64_t>(params.size()));
  for (const auto& p : params) {
    w.str(p.name);
    w.i64(static_cast<int64_t>(p.tensor.shape().size()));
    for (int64_t e : p.tensor.shape()) w.i64(e);
    w.reals(p.tensor.values());
  }

  // Optimizer section, serialized in parameter order for determinism.
  w.u8(opt ? 1 : 0);
  if (opt) {
    const auto& oc = opt->config();
    w.u8(oc.kind == OptKind::radam ? 1 : 0);
    w.f64(oc.beta1);
    w.f64(oc.beta2);
    w.f64(oc.eps);
    w.f64(oc.weight_decay);
    w.f64(oc.max_grad_norm);
    w.i64(opt->step_count());
    const auto& state = opt->state();
    int64_t count = 0;
    for (const auto& p : params)
      if (state.count(p.name)) ++count;
    w.i64(count);
    for (const auto& p : params) {
      auto it = state.find(p.name);
      if (it == state.end()) continue;
      w.str(p.name);
      w.reals(it->second.m);
      w.reals(it->second.v);
    }
  }

  uint32_t checksum = crc32(w.buffer().data(), w.buffer().size());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  out.write(reinterpret_cast<const char*>(&checksum), 4);
  if (!out) throw DataError("failed writing checkpoint: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string data = ss.str();
  if (data.size() < 12) throw FormatError(path + ": truncated checkpoint");

  uint32_t stored;
  std::memcpy(&stored, data.data() + data.size() - 4, 4);
  uint32_t actual = crc32(data.data(), data.size() - 4);
  if (stored != actual) {
    std::ostringstream msg;
    msg << path << ": checksum mismatch (stored " << std::hex << stored << ", computed " << actual
        << "); the checkpoint is corrupt";
    throw FormatError(msg.str());
  }

  Reader r(data.substr(0, data.size() - 4), path);
  char magic[8];
  std::memcpy(magic, r.data().data(), 8);
  if (std::string(magic, 8) != std::string(kMagic, 8))
    throw FormatError(path + ": not a checkpoint file (bad magic)");
  for (int i = 0; i < 8; ++i) r.u8();
  uint32_t version = r.u32();
  if (version != kVersion)
    throw FormatError(path + ": checkpoint version " + std::to_string(version) +
                      ", this build reads version " + std::to_string(kVersion));

  TransformerConfig cfg;
  cfg.layers = r.i64();
  cfg.model_dim = r.i64();
  cfg.ff_dim = r.i64();
  cfg.heads = r.i64();
  cfg.dropout = r.f64();
  cfg.rel_pos_clip = r.i64();
  cfg.head_kind = r.u8() ? HeadKind::continuous : HeadKind::softmax;
  cfg.label_smoothing = r.f64();
  cfg.lambda_vmf = r.f64();

  int64_t vocab_size = r.i64();
  std::vector<std::string> tokens;
  tokens.reserve(static_cast<size_t>(vocab_size));
  for (int64_t i = 0; i < vocab_size; ++i) tokens.push_back(r.str());
  int64_t dim = r.i64();
  bool frozen = r.u8() != 0;

  bool freeze_embeddings = r.u8() != 0;
  bool freeze_encoder = r.u8() != 0;
  LoadedCheckpoint out;
  out.step = r.i64();

  int64_t param_count = r.i64();
  std::vector<std::pair<std::string, std::vector<real>>> param_values;
  std::vector<real> embedding_rows;
  for (int64_t i = 0; i < param_count; ++i) {
    std::string name = r.str();
    int64_t ndim = r.i64();
    for (int64_t e = 0; e < ndim; ++e) r.i64();
    std::vector<real> values = r.reals();
    if (name == "embedding") embedding_rows = values;
    param_values.emplace_back(std::move(name), std::move(values));
  }
  if (embedding_rows.empty()) throw FormatError(path + ": checkpoint has no embedding parameter");

  MultiVocab vocab = MultiVocab::from_tokens(tokens, dim, frozen, std::move(embedding_rows));
  out.model = std::make_unique<TranslationModel>(cfg, std::move(vocab), 0);
  auto& params = out.model->parameters();
  if (param_values.size() != params.size())
    throw FormatError(path + ": checkpoint holds " + std::to_string(param_values.size()) +
                      " parameters, model expects " + std::to_string(params.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != param_values[i].first)
      throw FormatError(path + ": parameter order mismatch at '" + param_values[i].first + "'");
    if (params[i].tensor.values().size() != param_values[i].second.size())
      throw FormatError(path + ": parameter '" + params[i].name + "' shape mismatch");
    params[i].tensor.values() = std::move(param_values[i].second);
  }
  out.model->set_freeze_embeddings(freeze_embeddings);
  out.model->set_freeze_encoder(freeze_encoder);

  if (r.u8()) {
    OptimizerConfig oc;
    oc.kind = r.u8() ? OptKind::radam : OptKind::adam;
    oc.beta1 = r.f64();
    oc.beta2 = r.f64();
    oc.eps = r.f64();
    oc.weight_decay = r.f64();
    oc.max_grad_norm = r.f64();
    out.optimizer_config = oc;
    out.optimizer_steps = r.i64();
    int64_t count = r.i64();
    for (int64_t i = 0; i < count; ++i) {
      std::string name = r.str();
      Optimizer::MomentState st;
      st.m = r.reals();
      st.v = r.reals();
      out.optimizer_state[name] = std::move(st);
    }
  }
  return out;
}

}  // namespace hubmt
