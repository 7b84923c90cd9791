#pragma once
// Central finite-difference verification of reverse-mode gradients.

#include <functional>

#include "ufrec/optim.hpp"

namespace ufrec {

// fwd() deterministically computes the scalar loss from the store's current
// parameter values (rebuilding the tape); fwd_bwd() computes it once and
// accumulates gradients into the store. Returns the max over trainable
// coordinates of |analytic - numeric| / max(1, |analytic|, |numeric|).
inline double finite_diff_check(ParameterStore& store, const std::function<double()>& fwd,
                                const std::function<double()>& fwd_bwd, double eps = 1e-5) {
  if (eps < 1e-7 || eps > 1e-3) throw std::runtime_error("finite_diff_check: eps out of range");

  store.zero_grads();
  const double base = fwd_bwd();
  if (!std::isfinite(base)) throw std::runtime_error("finite_diff_check: non-finite loss");

  std::map<std::string, std::vector<double>> analytic;
  for (auto& [name, e] : store.entries()) {
    if (!e.trainable) continue;
    e.t->ensure_grad();
    analytic[name] = e.t->grad;
  }

  double worst = 0.0;
  for (auto& [name, e] : store.entries()) {
    if (!e.trainable) continue;
    Tensor& t = *e.t;
    for (size_t i = 0; i < t.size(); ++i) {
      const double keep = t.val[i];
      t.val[i] = keep + eps;
      const double fp = fwd();
      t.val[i] = keep - eps;
      const double fm = fwd();
      t.val[i] = keep;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw std::runtime_error("finite_diff_check: non-finite perturbed loss at " + name);
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[name][i];
      const double rel = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      if (rel > worst) worst = rel;
    }
  }
  store.zero_grads();
  return worst;
}

}  // namespace ufrec
