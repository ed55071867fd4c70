#pragma once

// Central finite-difference oracle for reverse-mode gradients. Builds a
// scalar probe loss sum(c .* f(inputs)) with fixed random coefficients so
// that sign structure in the Jacobian cannot cancel out.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "hubmt/ops.hpp"
#include "hubmt/tensor.hpp"

namespace hubmt::testing {

struct GradCheckResult {
  bool ok = true;
  double max_rel_err = 0.0;
  std::string detail;
};

inline GradCheckResult gradcheck(const std::function<Tensor(std::vector<Tensor>&)>& fn,
                                 std::vector<Tensor> inputs, Rng& rng, double rel_tol = 1e-4,
                                 double h = 1e-5) {
  for (auto& in : inputs) in.set_requires_grad(true);

  Tensor out = fn(inputs);
  Tensor probe = Tensor::zeros(out.shape());
  for (auto& v : probe.values()) v = rng.uniform(-1.0, 1.0);

  Tensor loss = sum_all(mul(out, probe));
  for (auto& in : inputs) in.zero_grad();
  backward(loss);

  GradCheckResult res;
  for (size_t t = 0; t < inputs.size(); ++t) {
    auto& in = inputs[t];
    std::vector<real> analytic = in.grad();
    for (int64_t i = 0; i < in.numel(); ++i) {
      real orig = in.values()[i];
      real step = static_cast<real>(h) * std::max(real(1), std::abs(orig));

      in.values()[i] = orig + step;
      Tensor op = fn(inputs);
      real lp = 0;
      for (int64_t j = 0; j < op.numel(); ++j) lp += op.values()[j] * probe.values()[j];

      in.values()[i] = orig - step;
      Tensor om = fn(inputs);
      real lm = 0;
      for (int64_t j = 0; j < om.numel(); ++j) lm += om.values()[j] * probe.values()[j];

      in.values()[i] = orig;
      real numeric = (lp - lm) / (2 * step);
      real denom = std::max({std::abs(numeric), std::abs(analytic[i]), real(1e-8)});
      real rel = std::abs(numeric - analytic[i]) / denom;
      if (rel > res.max_rel_err) res.max_rel_err = rel;
      if (rel > rel_tol && std::abs(numeric - analytic[i]) > 1e-7) {
        res.ok = false;
        res.detail = "input " + std::to_string(t) + " elem " + std::to_string(i) + ": analytic " +
                     std::to_string(analytic[i]) + " vs numeric " + std::to_string(numeric);
        return res;
      }
    }
  }
  return res;
}

inline Tensor random_tensor(std::vector<int64_t> shape, Rng& rng, real lo = -1.5, real hi = 1.5) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace hubmt::testing
