#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "hubmt/tensor.hpp"

namespace hubmt {

struct NamedParam {
  std::string name;
  Tensor tensor;
};

enum class OptKind { adam, radam };

struct OptimizerConfig {
  OptKind kind = OptKind::adam;
  real beta1 = 0.9;
  real beta2 = 0.999;
  real eps = 1e-8;
  real weight_decay = 0.0;
  real max_grad_norm = 0.0;  // 0 disables clipping
};

OptKind opt_kind_from_string(const std::string& s);
std::string to_string(OptKind k);

// Adam / RAdam with decoupled weight decay and global-norm clipping.
// RAdam falls back to plain momentum updates while the rectification term
// is inactive. Elements covered by a tensor's freeze mask are skipped
// entirely, moments included, so frozen bytes never move.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}

  // Clips (if configured), applies the update rule, zeroes grads and
  // increments the step counter. lr == 0 leaves parameters untouched.
  void step(std::vector<NamedParam>& params, real lr);

  // Global L2 norm over all grads (after freeze masking); exposed for tests.
  static real global_grad_norm(const std::vector<NamedParam>& params);

  int64_t step_count() const { return step_count_; }
  const OptimizerConfig& config() const { return cfg_; }

  struct MomentState {
    std::vector<real> m;
    std::vector<real> v;
  };
  std::unordered_map<std::string, MomentState>& state() { return state_; }
  const std::unordered_map<std::string, MomentState>& state() const { return state_; }
  void set_step_count(int64_t s) { step_count_ = s; }

 private:
  OptimizerConfig cfg_;
  int64_t step_count_ = 0;
  std::unordered_map<std::string, MomentState> state_;
};

enum class ScheduleKind { noam, linear_warmup };

struct LrSchedule {
  ScheduleKind kind = ScheduleKind::noam;
  int64_t warmup_steps = 4000;
  real warmup_init_lr = 1e-8;
  real warmup_end_lr = 7e-4;
  real min_lr = 1e-9;
  int64_t model_dim = 300;  // noam only
  real factor = 1.0;        // noam scale ("learning_rate")
};

// Pure function of (schedule, step); step counts optimizer updates, starting at 1.
real schedule_lr(const LrSchedule& s, int64_t step);

}  // namespace hubmt
