#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "xlij/errors.hpp"
#include "xlij/params.hpp"
#include "xlij/rng.hpp"

namespace xlij {

struct GradCheckOptions {
  double epsilon = 1e-5;    // central-difference step
  double tolerance = 1e-4;  // max relative error allowed
  int samples = 64;         // coordinates to probe; <= 0 means every coordinate
  uint64_t seed = 17;
};

struct GradCheckItem {
  std::string param;
  int flat_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckItem> items;
  double max_rel_error = 0.0;
  bool pass = false;
};

// Central finite differences against the analytic gradient, float64 only.
// loss_fn(with_grad): evaluates the loss at the current parameter values;
// when with_grad is true it must also leave d(loss)/d(param) in each
// trainable parameter's grad (grads are zeroed here beforehand).
//
// Sampled coordinates rotate round-robin over the trainable parameters so a
// small sample count still touches every parameter group.
inline GradCheckReport grad_check(ParamStore<double>& store,
                                  const std::function<double(bool)>& loss_fn,
                                  const GradCheckOptions& opts = {}) {
  if (!(opts.epsilon >= 1e-6 && opts.epsilon <= 1e-4))
    fail(errc::config, "grad_check: epsilon must lie in [1e-6, 1e-4]");

  const double l0 = loss_fn(false);
  const double l1 = loss_fn(false);
  if (l0 != l1) fail(errc::determinism, "grad_check: loss not deterministic at base point");

  store.zero_grad();
  loss_fn(true);

  std::vector<size_t> trainable;
  for (size_t i = 0; i < store.count(); ++i)
    if (store.at(i).trainable && store.at(i).value.size() > 0) trainable.push_back(i);
  if (trainable.empty()) fail(errc::config, "grad_check: no trainable parameters");

  std::vector<std::pair<size_t, int>> coords;
  if (opts.samples <= 0) {
    for (size_t i : trainable)
      for (size_t j = 0; j < store.at(i).value.size(); ++j) coords.emplace_back(i, (int)j);
  } else {
    auto rng = make_rng(opts.seed);
    for (int s = 0; s < opts.samples; ++s) {
      size_t pi = trainable[s % trainable.size()];
      int ci = static_cast<int>(rng() % store.at(pi).value.size());
      coords.emplace_back(pi, ci);
    }
  }

  GradCheckReport report;
  for (auto [pi, ci] : coords) {
    Parameter<double>& p = store.at(pi);
    const double saved = p.value.data[ci];
    p.value.data[ci] = saved + opts.epsilon;
    const double lp = loss_fn(false);
    p.value.data[ci] = saved - opts.epsilon;
    const double lm = loss_fn(false);
    p.value.data[ci] = saved;

    GradCheckItem item;
    item.param = p.name;
    item.flat_index = ci;
    item.analytic = p.grad.data[ci];
    item.numeric = (lp - lm) / (2.0 * opts.epsilon);
    // Relative to the gradient magnitude; floored so coordinates with a
    // negligible gradient compare absolutely instead of amplifying
    // finite-difference roundoff.
    const double denom = std::max({1e-3, std::abs(item.analytic), std::abs(item.numeric)});
    item.rel_error = std::abs(item.analytic - item.numeric) / denom;
    report.max_rel_error = std::max(report.max_rel_error, item.rel_error);
    report.items.push_back(std::move(item));
  }
  report.pass = report.max_rel_error <= opts.tolerance;
  return report;
}

}  // namespace xlij
