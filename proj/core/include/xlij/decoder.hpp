#pragma once

#include <functional>
#include <string>
#include <vector>

#include "xlij/nn.hpp"
#include "xlij/params.hpp"
#include "xlij/tape.hpp"

namespace xlij {

struct DecoderConfig {
  int num_layers = 8;
  int embed_dim = 64;
  int num_heads = 4;
  int vocab_size = 64;
  int max_seq = 32;
  int mlp_hidden = 0;  // 0 -> 4 * embed_dim

  int hidden() const { return mlp_hidden > 0 ? mlp_hidden : 4 * embed_dim; }
};

// Transform applied to the hidden state after one decoder layer's block.
template <class T>
struct InjectionHook {
  int layer_index = 0;  // 1-based
  std::function<typename Tape<T>::Id(Tape<T>&, typename Tape<T>::Id)> apply;
};

// Causal toy decoder over [visual prefix; text embeddings]. Every sequence
// position, prefix included, gets a learned absolute positional embedding.
template <class T>
class DecoderLM {
 public:
  DecoderLM(ParamStore<T>& store, DecoderConfig cfg) : cfg_(std::move(cfg)) {
    tok_ = &store.add("decoder.tok_embed", cfg_.vocab_size, cfg_.embed_dim, init::embedding);
    pos_ = &store.add("decoder.pos", cfg_.max_seq, cfg_.embed_dim, init::embedding);
    for (int l = 1; l <= cfg_.num_layers; ++l)
      blocks_.push_back(TransformerBlock<T>::make(store, "decoder.block" + std::to_string(l),
                                                  cfg_.embed_dim, cfg_.num_heads, cfg_.hidden(),
                                                  /*causal=*/true));
    head_ = &store.add("decoder.head", cfg_.embed_dim, cfg_.vocab_size, init::fan_in);
  }

  const DecoderConfig& config() const { return cfg_; }

  // Runs the full stack and returns logits of shape seq x vocab. Hooks fire
  // after their layer's block, before the next layer (a hook at the last
  // layer still affects the output head). With an empty hook list this is
  // exactly the plain prefix-LM forward pass.
  typename Tape<T>::Id forward(Tape<T>& t, typename Tape<T>::Id projected_prefix,
                               const std::vector<int>& text_tokens,
                               const std::vector<InjectionHook<T>>& hooks) const {
    for (size_t i = 0; i < hooks.size(); ++i) {
      if (hooks[i].layer_index < 1 || hooks[i].layer_index > cfg_.num_layers)
        fail(errc::config, "decoder hook at out-of-range layer " +
                               std::to_string(hooks[i].layer_index));
      if (i > 0 && hooks[i].layer_index < hooks[i - 1].layer_index)
        fail(errc::config, "decoder hooks must be sorted ascending by layer");
    }
    const int n_prefix = projected_prefix == Tape<T>::none ? 0 : t.val(projected_prefix).rows;
    if (n_prefix > 0 && t.val(projected_prefix).cols != cfg_.embed_dim)
      fail(errc::config, "decoder: prefix width != embed dim");
    const int seq = n_prefix + static_cast<int>(text_tokens.size());
    if (seq > cfg_.max_seq) fail(errc::config, "decoder: sequence exceeds max_seq");

    auto x = t.embed(param_leaf(t, *tok_), text_tokens);
    if (n_prefix > 0) x = t.concat_rows(projected_prefix, x);
    x = t.add(x, t.embed(param_leaf(t, *pos_), iota_ids(seq)));

    size_t next_hook = 0;
    for (int l = 1; l <= cfg_.num_layers; ++l) {
      x = blocks_[l - 1].apply(t, x);
      t.check_finite(x, "decoder layer " + std::to_string(l));
      while (next_hook < hooks.size() && hooks[next_hook].layer_index == l) {
        x = hooks[next_hook].apply(t, x);
        t.check_finite(x, "injection after decoder layer " + std::to_string(l));
        ++next_hook;
      }
    }
    return t.linear(x, param_leaf(t, *head_));
  }

  const TransformerBlock<T>& block(int layer) const { return blocks_[layer - 1]; }

 private:
  DecoderConfig cfg_;
  Parameter<T>*tok_, *pos_, *head_;
  std::vector<TransformerBlock<T>> blocks_;
};

}  // namespace xlij
