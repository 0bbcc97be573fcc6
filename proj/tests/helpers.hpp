#pragma once

#include <functional>
#include <random>

#include "xlij/gradcheck.hpp"
#include "xlij/mat.hpp"
#include "xlij/params.hpp"
#include "xlij/tape.hpp"

namespace xlij::testing {

inline Mat<double> random_mat(int r, int c, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> d(-scale, scale);
  Mat<double> m(r, c);
  for (auto& v : m.data) v = d(rng);
  return m;
}

// Exhaustive finite-difference check of a scalar graph over every trainable
// coordinate in `store`. build(tape) must construct the loss from the current
// parameter values and return its node.
inline double fd_all_coords(ParamStore<double>& store,
                            const std::function<Tape<double>::Id(Tape<double>&)>& build,
                            double epsilon = 1e-6) {
  auto loss_fn = [&](bool with_grad) {
    Tape<double> tape;
    auto root = build(tape);
    if (with_grad) tape.backward(root);
    return tape.val(root).data[0];
  };
  GradCheckOptions opts;
  opts.epsilon = epsilon;
  opts.samples = 0;  // every coordinate
  return grad_check(store, loss_fn, opts).max_rel_error;
}

}  // namespace xlij::testing
