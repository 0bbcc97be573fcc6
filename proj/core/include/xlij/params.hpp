#pragma once

#include <cstdint>
#include <deque>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "xlij/errors.hpp"
#include "xlij/mat.hpp"
#include "xlij/rng.hpp"

namespace xlij {

// Named learnable tensor. grad always mirrors value's shape; untrainable
// parameters never receive gradient (their grad stays exactly zero).
template <class T>
struct Parameter {
  std::string name;
  Mat<T> value;
  Mat<T> grad;
  bool trainable = true;
};

enum class init { zeros, ones, fan_in, embedding };

// Owns every parameter of a model in creation order. Creation order is fixed
// by the model constructors, which makes initialization reproducible from
// the seed alone.
template <class T>
class ParamStore {
 public:
  explicit ParamStore(uint64_t seed) : rng_(make_rng(derive_seed(seed, 0xA11))) {}

  Parameter<T>& add(const std::string& name, int rows, int cols, init how,
                    bool trainable = true) {
    if (index_.count(name)) fail(errc::config, "duplicate parameter name: " + name);
    items_.emplace_back();
    Parameter<T>& p = items_.back();
    p.name = name;
    p.value = Mat<T>(rows, cols);
    p.grad = Mat<T>(rows, cols);
    p.trainable = trainable;
    switch (how) {
      case init::zeros:
        break;
      case init::ones:
        std::fill(p.value.data.begin(), p.value.data.end(), T(1));
        break;
      case init::fan_in:
        fill_uniform(p.value, 1.0 / std::sqrt(static_cast<double>(rows)));
        break;
      case init::embedding:
        fill_uniform(p.value, 1.0 / std::sqrt(static_cast<double>(cols)));
        break;
    }
    index_[name] = items_.size() - 1;
    return p;
  }

  Parameter<T>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &items_[it->second];
  }
  const Parameter<T>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &items_[it->second];
  }

  size_t count() const { return items_.size(); }
  Parameter<T>& at(size_t i) { return items_[i]; }
  const Parameter<T>& at(size_t i) const { return items_[i]; }

  void zero_grad() {
    for (auto& p : items_) p.grad.set_zero();
  }

  size_t trainable_scalars() const {
    size_t n = 0;
    for (const auto& p : items_)
      if (p.trainable) n += p.value.size();
    return n;
  }

  size_t total_scalars() const {
    size_t n = 0;
    for (const auto& p : items_) n += p.value.size();
    return n;
  }

  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

 private:
  void fill_uniform(Mat<T>& m, double bound) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (T& v : m.data) v = static_cast<T>(dist(rng_));
  }

  std::deque<Parameter<T>> items_;  // deque: stable addresses for tape leaves
  std::unordered_map<std::string, size_t> index_;
  std::mt19937_64 rng_;
};

}  // namespace xlij
