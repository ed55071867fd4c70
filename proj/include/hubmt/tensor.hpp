#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "hubmt/common.hpp"

namespace hubmt {

class Tensor;

// One node of the dynamic tape. Interior nodes carry a backward closure that
// routes the node's grad into its parents; leaves just accumulate.
struct TensorNode {
  std::vector<int64_t> shape;
  std::vector<real> values;
  std::vector<real> grad;  // sized lazily, same length as values once present
  bool requires_grad = false;

  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  // Per-element freeze mask (1 = frozen). Optimizers skip frozen entries
  // entirely and trainers zero their grads before clipping, so frozen bytes
  // stay bit-identical across steps.
  std::shared_ptr<std::vector<uint8_t>> freeze_mask;

  int64_t numel() const { return static_cast<int64_t>(values.size()); }
  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), real(0));
  }
};

// Grad recording is a thread-local mode so decoding threads can run
// inference without touching the tape.
bool grad_enabled();
void set_grad_enabled(bool on);

struct NoGradGuard {
  NoGradGuard() : prev_(grad_enabled()) { set_grad_enabled(false); }
  ~NoGradGuard() { set_grad_enabled(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Value-semantic handle onto a shared tape node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int64_t> shape, bool requires_grad = false);
  static Tensor full(std::vector<int64_t> shape, real value, bool requires_grad = false);
  static Tensor from_values(std::vector<int64_t> shape, std::vector<real> values,
                            bool requires_grad = false);
  static Tensor randn(std::vector<int64_t> shape, Rng& rng, real stddev = 1.0,
                      bool requires_grad = false);
  // Uniform Glorot init for a [fan_out, fan_in] matrix.
  static Tensor glorot(int64_t rows, int64_t cols, Rng& rng, bool requires_grad = true);
  static Tensor scalar(real value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int64_t>& shape() const { return node_->shape; }
  int64_t dim(size_t i) const { return node_->shape[i]; }
  size_t ndim() const { return node_->shape.size(); }
  int64_t numel() const { return node_->numel(); }

  std::vector<real>& values() { return node_->values; }
  const std::vector<real>& values() const { return node_->values; }
  real item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  std::vector<real>& grad() { return node_->grad; }
  const std::vector<real>& grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() == node_->values.size() && !node_->values.empty(); }
  void zero_grad() { node_->grad.assign(node_->values.size(), real(0)); }
  void drop_grad() { node_->grad.clear(); }

  void set_freeze_mask(std::shared_ptr<std::vector<uint8_t>> mask) { node_->freeze_mask = std::move(mask); }
  const std::shared_ptr<std::vector<uint8_t>>& freeze_mask() const { return node_->freeze_mask; }

  // Detached copy of the values (fresh leaf, no history).
  Tensor clone_detached(bool requires_grad = false) const;

  std::shared_ptr<TensorNode>& node() { return node_; }
  const std::shared_ptr<TensorNode>& node() const { return node_; }

  uint64_t value_hash() const { return fnv1a64(node_->values); }

  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<TensorNode> node_;
};

// Reverse-mode sweep from a scalar loss. Grads accumulate: calling twice
// without zeroing doubles every grad.
void backward(const Tensor& loss);

// Construction helper used by every op: wires parents/backward only when grad
// mode is on and some input needs grad.
Tensor make_op_result(std::vector<int64_t> shape, std::vector<real> values,
                      std::vector<Tensor> inputs,
                      std::function<void(TensorNode&)> backward_fn);

int64_t shape_numel(const std::vector<int64_t>& shape);

}  // namespace hubmt
