#pragma once

#include <string>
#include <vector>

#include "xlij/nn.hpp"
#include "xlij/params.hpp"
#include "xlij/tape.hpp"

namespace xlij {

struct VisionEncoderConfig {
  int num_layers = 8;
  int embed_dim = 32;
  int num_heads = 2;
  int patch_rows = 4;
  int patch_cols = 4;
  int attr_dim = 12;
  int mlp_hidden = 0;        // 0 -> 4 * embed_dim
  int bottleneck_layer = 0;  // 0 = off; otherwise in [1, num_layers - 1]
  std::vector<int> mix_groups;  // patch -> mixing-group id; also ties pos embeddings

  int patches() const { return patch_rows * patch_cols; }
  int hidden() const { return mlp_hidden > 0 ? mlp_hidden : 4 * embed_dim; }
};

// Bidirectional toy ViT over per-patch attribute features.
//
// Positional embeddings are tied per mixing group, so patches inside one
// group are exchangeable end to end: permuting their attribute vectors
// permutes every layer's rows the same way. After the bottleneck layer the
// token stream is replaced by its group means, which such a permutation
// leaves unchanged, so no function of the deeper layers can recover which
// patch inside a group carried which detail, no matter how the encoder is
// trained. A query can still resolve per-patch detail from pre-bottleneck
// layers, whose rows stay aligned with patch indices.
template <class T>
class VisionEncoder {
 public:
  VisionEncoder(ParamStore<T>& store, VisionEncoderConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.num_layers < 2) fail(errc::config, "vision encoder: need at least 2 layers");
    if (cfg_.bottleneck_layer != 0 &&
        (cfg_.bottleneck_layer < 1 || cfg_.bottleneck_layer > cfg_.num_layers - 1))
      fail(errc::config, "vision encoder: bottleneck layer outside [1, num_layers-1]");
    if (static_cast<int>(cfg_.mix_groups.size()) != cfg_.patches())
      fail(errc::config, "vision encoder: mix_groups must map every patch");
    int n_groups = 0;
    for (int g : cfg_.mix_groups) n_groups = std::max(n_groups, g + 1);

    patch_w_ = &store.add("vision.patch_proj.w", cfg_.attr_dim, cfg_.embed_dim, init::fan_in);
    patch_b_ = &store.add("vision.patch_proj.b", 1, cfg_.embed_dim, init::zeros);
    pos_ = &store.add("vision.pos", n_groups, cfg_.embed_dim, init::embedding);
    for (int l = 1; l <= cfg_.num_layers; ++l)
      blocks_.push_back(TransformerBlock<T>::make(store, "vision.block" + std::to_string(l),
                                                  cfg_.embed_dim, cfg_.num_heads, cfg_.hidden(),
                                                  /*causal=*/false));

    // Fixed group-mean mixing matrix.
    mix_ = Mat<T>::zeros(cfg_.patches(), cfg_.patches());
    std::vector<int> group_size(n_groups, 0);
    for (int g : cfg_.mix_groups) ++group_size[g];
    for (int i = 0; i < cfg_.patches(); ++i)
      for (int j = 0; j < cfg_.patches(); ++j)
        if (cfg_.mix_groups[i] == cfg_.mix_groups[j])
          mix_.at(i, j) = T(1) / T(group_size[cfg_.mix_groups[i]]);
  }

  const VisionEncoderConfig& config() const { return cfg_; }

  // Embeds patch attribute features and returns the post-block token matrix
  // of every layer 1..num_layers.
  std::vector<typename Tape<T>::Id> encode(Tape<T>& t, typename Tape<T>::Id features) const {
    if (t.val(features).rows != cfg_.patches())
      fail(errc::config, "vision encoder: image patch count " +
                             std::to_string(t.val(features).rows) + " vs patch grid " +
                             std::to_string(cfg_.patches()));
    if (t.val(features).cols != cfg_.attr_dim)
      fail(errc::config, "vision encoder: attribute width mismatch");
    auto x = t.linear(features, param_leaf(t, *patch_w_), param_leaf(t, *patch_b_));
    x = t.add(x, t.embed(param_leaf(t, *pos_), cfg_.mix_groups));

    std::vector<typename Tape<T>::Id> layers;
    layers.reserve(cfg_.num_layers);
    for (int l = 1; l <= cfg_.num_layers; ++l) {
      x = blocks_[l - 1].apply(t, x);
      t.check_finite(x, "vision layer " + std::to_string(l));
      layers.push_back(x);
      if (l == cfg_.bottleneck_layer) x = t.matmul(t.leaf(mix_, nullptr), x);
    }
    return layers;
  }

  // The group-mean mixing applied after the bottleneck layer (test oracle hook).
  const Mat<T>& mix_matrix() const { return mix_; }

 private:
  VisionEncoderConfig cfg_;
  Parameter<T>*patch_w_, *patch_b_, *pos_;
  std::vector<TransformerBlock<T>> blocks_;
  Mat<T> mix_;
};

}  // namespace xlij
