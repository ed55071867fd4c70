#include "hubmt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace hubmt {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool on) { g_grad_enabled = on; }

int64_t shape_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t e : shape) n *= e;
  return n;
}

Tensor Tensor::zeros(std::vector<int64_t> shape, bool requires_grad) {
  return full(std::move(shape), real(0), requires_grad);
}

Tensor Tensor::full(std::vector<int64_t> shape, real value, bool requires_grad) {
  auto node = std::make_shared<TensorNode>();
  node->values.assign(static_cast<size_t>(shape_numel(shape)), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from_values(std::vector<int64_t> shape, std::vector<real> values,
                           bool requires_grad) {
  if (shape_numel(shape) != static_cast<int64_t>(values.size()))
    throw DimensionError("from_values: shape " + shape_str(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::randn(std::vector<int64_t> shape, Rng& rng, real stddev, bool requires_grad) {
  auto t = zeros(std::move(shape), requires_grad);
  for (auto& v : t.values()) v = rng.normal() * stddev;
  return t;
}

Tensor Tensor::glorot(int64_t rows, int64_t cols, Rng& rng, bool requires_grad) {
  real bound = std::sqrt(real(6) / real(rows + cols));
  auto t = zeros({rows, cols}, requires_grad);
  for (auto& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

Tensor Tensor::scalar(real value, bool requires_grad) {
  return from_values({1}, {value}, requires_grad);
}

real Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node_->values[0];
}

Tensor Tensor::clone_detached(bool requires_grad) const {
  auto node = std::make_shared<TensorNode>();
  node->shape = node_->shape;
  node->values = node_->values;
  node->requires_grad = requires_grad;
  node->freeze_mask = node_->freeze_mask;
  return Tensor(std::move(node));
}

Tensor make_op_result(std::vector<int64_t> shape, std::vector<real> values,
                      std::vector<Tensor> inputs,
                      std::function<void(TensorNode&)> backward_fn) {
  Tensor out = Tensor::from_values(std::move(shape), std::move(values));
  if (!grad_enabled()) return out;
  bool needs = false;
  for (const auto& in : inputs)
    if (in.requires_grad()) needs = true;
  if (!needs) return out;
  out.node()->requires_grad = true;
  out.node()->parents.reserve(inputs.size());
  for (auto& in : inputs) out.node()->parents.push_back(in.node());
  out.node()->backward_fn = std::move(backward_fn);
  return out;
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw ContractError("backward: undefined tensor");
  if (loss.numel() != 1)
    throw ContractError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));

  // Iterative post-order DFS; sequence graphs get deep enough that the
  // recursive version would exhaust the stack.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  struct Frame {
    TensorNode* node;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({loss.node().get(), 0});
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      TensorNode* p = f.node->parents[f.next_parent++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  // Interior grads are transient per sweep; only leaves accumulate across
  // repeated backward calls.
  for (TensorNode* n : order)
    if (n->backward_fn) n->grad.assign(n->values.size(), real(0));

  loss.node()->ensure_grad();
  loss.node()->grad[0] += real(1);

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (!n->backward_fn) continue;
    for (auto& p : n->parents)
      if (p->requires_grad) p->ensure_grad();
    n->backward_fn(*n);
  }
}

}  // namespace hubmt
