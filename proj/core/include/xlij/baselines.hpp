#pragma once

#include <vector>

#include "xlij/fusion.hpp"
#include "xlij/projector.hpp"
#include "xlij/tape.hpp"

namespace xlij {

// Comparator: context-blind element-wise addition of final-vision-layer
// tokens at every injection point.
struct DeepStackConfig {
  std::vector<int> injection_layers;
};

template <class T>
typename Tape<T>::Id deepstack_inject(Tape<T>& t, typename Tape<T>::Id h,
                                      typename Tape<T>::Id final_features,
                                      const VisualMask& mask) {
  return gated_update(t, h, final_features, Tape<T>::none, mask);
}

// Comparator: fixed one-to-one wiring of the first n vision layers to the
// first n decoder layers, ungated.
struct SliConfig {
  int n = 0;
};

template <class T>
typename Tape<T>::Id sli_inject(Tape<T>& t, const SliConfig& cfg, int decoder_layer,
                                typename Tape<T>::Id h, const ProjectedFeatureSet<T>& projected,
                                const VisualMask& mask) {
  if (decoder_layer < 1 || decoder_layer > cfg.n)
    fail(errc::config, "sli: decoder layer " + std::to_string(decoder_layer) +
                           " outside the wired range [1, " + std::to_string(cfg.n) + "]");
  for (size_t i = 0; i < projected.size(); ++i)
    if (projected.layers[i] == decoder_layer)
      return gated_update(t, h, projected.features[i], Tape<T>::none, mask);
  fail(errc::config,
       "sli: projected set lacks vision layer " + std::to_string(decoder_layer));
}

}  // namespace xlij
