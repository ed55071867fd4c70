#include "hubmt/optim.hpp"

#include <cmath>

namespace hubmt {

OptKind opt_kind_from_string(const std::string& s) {
  if (s == "adam") return OptKind::adam;
  if (s == "radam") return OptKind::radam;
  throw ConfigError("unknown optimizer: " + s);
}

std::string to_string(OptKind k) { return k == OptKind::adam ? "adam" : "radam"; }

real Optimizer::global_grad_norm(const std::vector<NamedParam>& params) {
  real sq = 0;
  for (const auto& p : params)
    for (real g : p.tensor.grad()) sq += g * g;
  return std::sqrt(sq);
}

void Optimizer::step(std::vector<NamedParam>& params, real lr) {
  for (auto& p : params) {
    if (!p.tensor.has_grad())
      throw ContractError("optimizer step: parameter '" + p.name + "' has no gradient");
    const auto& mask = p.tensor.freeze_mask();
    if (mask) {
      auto& g = p.tensor.grad();
      for (size_t i = 0; i < g.size(); ++i)
        if ((*mask)[i]) g[i] = real(0);
    }
  }

  if (cfg_.max_grad_norm > real(0)) {
    real norm = global_grad_norm(params);
    if (norm > cfg_.max_grad_norm) {
      real s = cfg_.max_grad_norm / norm;
      for (auto& p : params)
        for (real& g : p.tensor.grad()) g *= s;
    }
  }

  int64_t t = step_count_ + 1;
  real bc1 = real(1) - std::pow(cfg_.beta1, static_cast<real>(t));
  real bc2 = real(1) - std::pow(cfg_.beta2, static_cast<real>(t));

  // RAdam rectification (Liu et al. variant). While rho_t <= 4 the variance
  // estimate is untrustworthy and the update degrades to momentum SGD.
  bool rectified = true;
  real r_t = 1;
  if (cfg_.kind == OptKind::radam) {
    real rho_inf = real(2) / (real(1) - cfg_.beta2) - real(1);
    real b2t = std::pow(cfg_.beta2, static_cast<real>(t));
    real rho_t = rho_inf - real(2) * static_cast<real>(t) * b2t / (real(1) - b2t);
    if (rho_t > real(4)) {
      r_t = std::sqrt(((rho_t - 4) * (rho_t - 2) * rho_inf) /
                      ((rho_inf - 4) * (rho_inf - 2) * rho_t));
    } else {
      rectified = false;
    }
  }

  for (auto& p : params) {
    auto& st = state_[p.name];
    auto& vals = p.tensor.values();
    auto& grads = p.tensor.grad();
    if (st.m.size() != vals.size()) st.m.assign(vals.size(), real(0));
    if (st.v.size() != vals.size()) st.v.assign(vals.size(), real(0));
    const auto& mask = p.tensor.freeze_mask();

    for (size_t i = 0; i < vals.size(); ++i) {
      if (mask && (*mask)[i]) continue;
      real g = grads[i];
      st.m[i] = cfg_.beta1 * st.m[i] + (real(1) - cfg_.beta1) * g;
      st.v[i] = cfg_.beta2 * st.v[i] + (real(1) - cfg_.beta2) * g * g;
      real m_hat = st.m[i] / bc1;
      real update;
      if (cfg_.kind == OptKind::adam) {
        update = m_hat / (std::sqrt(st.v[i] / bc2) + cfg_.eps);
      } else if (rectified) {
        update = r_t * m_hat / (std::sqrt(st.v[i] / bc2) + cfg_.eps);
      } else {
        update = m_hat;
      }
      if (cfg_.weight_decay > real(0)) vals[i] -= lr * cfg_.weight_decay * vals[i];
      vals[i] -= lr * update;
    }
    p.tensor.zero_grad();
  }
  step_count_ = t;
}

real schedule_lr(const LrSchedule& s, int64_t step) {
  if (step < 1) throw ContractError("schedule_lr: step must be >= 1");
  real lr;
  if (s.kind == ScheduleKind::noam) {
    real st = static_cast<real>(step);
    real w = static_cast<real>(s.warmup_steps);
    lr = s.factor * std::pow(static_cast<real>(s.model_dim), real(-0.5)) *
         std::min(std::pow(st, real(-0.5)), st * std::pow(w, real(-1.5)));
  } else {
    if (step <= s.warmup_steps) {
      lr = s.warmup_init_lr + (s.warmup_end_lr - s.warmup_init_lr) * static_cast<real>(step) /
                                  static_cast<real>(s.warmup_steps);
    } else {
      // Horizon-free inverse-time decay from the warmup peak.
      lr = s.warmup_end_lr * static_cast<real>(s.warmup_steps) / static_cast<real>(step);
    }
  }
  return std::max(lr, s.min_lr);
}

}  // namespace hubmt
