#pragma once

#include <string>
#include <vector>

#include "xlij/nn.hpp"
#include "xlij/params.hpp"
#include "xlij/tape.hpp"

namespace xlij {

// Two-layer GELU MLP mapping vision features into the decoder embedding
// space. Frozen by default; the full-projector-finetune ablation unfreezes it.
template <class T>
class BaselineProjector {
 public:
  BaselineProjector(ParamStore<T>& store, int d_in, int d_out, bool trainable, int hidden = 0) {
    const int h = hidden > 0 ? hidden : d_out;
    w1_ = &store.add("projector.w1", d_in, h, init::fan_in, trainable);
    b1_ = &store.add("projector.b1", 1, h, init::zeros, trainable);
    w2_ = &store.add("projector.w2", h, d_out, init::fan_in, trainable);
    b2_ = &store.add("projector.b2", 1, d_out, init::zeros, trainable);
    d_in_ = d_in;
    d_out_ = d_out;
  }

  typename Tape<T>::Id project(Tape<T>& t, typename Tape<T>::Id v) const {
    if (t.val(v).cols != d_in_)
      fail(errc::config, "projector: input width " + std::to_string(t.val(v).cols) +
                             ", expected " + std::to_string(d_in_));
    auto h = t.gelu(t.linear(v, param_leaf(t, *w1_), param_leaf(t, *b1_)));
    return t.linear(h, param_leaf(t, *w2_), param_leaf(t, *b2_));
  }

  int d_in() const { return d_in_; }
  int d_out() const { return d_out_; }

 private:
  Parameter<T>*w1_, *b1_, *w2_, *b2_;
  int d_in_ = 0, d_out_ = 0;
};

// Low-rank delta for one sampled vision layer: (alpha/r) * (v A) B.
// B starts at zero so the adapted projection begins exactly at the base one.
template <class T>
struct LoraAdapter {
  int vision_layer = 0;
  int rank = 0;
  T alpha = T(0);
  Parameter<T>* a = nullptr;
  Parameter<T>* b = nullptr;

  static LoraAdapter make(ParamStore<T>& store, int vision_layer, int d_in, int d_out, int rank,
                          T alpha) {
    if (rank < 1) fail(errc::config, "lora adapter: rank must be >= 1");
    LoraAdapter ad;
    ad.vision_layer = vision_layer;
    ad.rank = rank;
    ad.alpha = alpha;
    const std::string prefix = "amp.layer" + std::to_string(vision_layer);
    ad.a = &store.add(prefix + ".a", d_in, rank, init::fan_in);
    ad.b = &store.add(prefix + ".b", rank, d_out, init::zeros);
    return ad;
  }

  T scale() const { return alpha / T(rank); }

  typename Tape<T>::Id delta(Tape<T>& t, typename Tape<T>::Id v) const {
    if (t.val(v).cols != a->value.rows)
      fail(errc::config, "lora adapter layer " + std::to_string(vision_layer) +
                             ": input width mismatch");
    return t.scale(t.matmul(t.matmul(v, param_leaf(t, *a)), param_leaf(t, *b)), scale());
  }
};

// Sampled per-layer visual token matrices, ascending by vision layer.
template <class T>
struct FeatureHierarchy {
  std::vector<int> layers;
  std::vector<typename Tape<T>::Id> features;

  void push(int layer, typename Tape<T>::Id id) {
    if (!layers.empty() && layer <= layers.back())
      fail(errc::config, "feature hierarchy: layer indices must be strictly ascending");
    layers.push_back(layer);
    features.push_back(id);
  }
  size_t size() const { return layers.size(); }
};

// Language-space aligned token maps, same order as the source hierarchy.
template <class T>
struct ProjectedFeatureSet {
  std::vector<int> layers;
  std::vector<typename Tape<T>::Id> features;
  size_t size() const { return layers.size(); }
};

// Pick the plan's sampled layers out of the full per-layer encoder output.
template <class T>
FeatureHierarchy<T> sample_hierarchy(const std::vector<typename Tape<T>::Id>& all_layers,
                                     const std::vector<int>& sampled) {
  FeatureHierarchy<T> h;
  for (int l : sampled) {
    if (l < 1 || l > static_cast<int>(all_layers.size()))
      fail(errc::config, "sampled vision layer " + std::to_string(l) + " out of range");
    h.push(l, all_layers[l - 1]);
  }
  return h;
}

// Base projection applied layer-wise (the adapters-disabled path).
template <class T>
ProjectedFeatureSet<T> project_base_set(Tape<T>& t, const BaselineProjector<T>& p,
                                        const FeatureHierarchy<T>& h) {
  ProjectedFeatureSet<T> out;
  out.layers = h.layers;
  for (auto f : h.features) out.features.push_back(p.project(t, f));
  return out;
}

// Adaptive multi-projection: base MLP plus the layer-specific low-rank delta
// for every sampled layer. Every layer present in the hierarchy must have
// exactly one adapter; anything else is a configuration error.
template <class T>
ProjectedFeatureSet<T> project_adaptive(Tape<T>& t, const BaselineProjector<T>& p,
                                        const std::vector<LoraAdapter<T>>& adapters,
                                        const FeatureHierarchy<T>& h) {
  ProjectedFeatureSet<T> out;
  out.layers = h.layers;
  for (size_t i = 0; i < h.layers.size(); ++i) {
    const LoraAdapter<T>* adapter = nullptr;
    for (const auto& ad : adapters)
      if (ad.vision_layer == h.layers[i]) adapter = &ad;
    if (!adapter)
      fail(errc::config,
           "no adapter for sampled vision layer " + std::to_string(h.layers[i]));
    out.features.push_back(t.add(p.project(t, h.features[i]), adapter->delta(t, h.features[i])));
  }
  if (adapters.size() != h.layers.size())
    fail(errc::config, "adapter list does not match the sampled vision layers");
  return out;
}

}  // namespace xlij
