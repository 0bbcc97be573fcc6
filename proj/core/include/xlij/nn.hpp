#pragma once

#include <string>
#include <vector>

#include "xlij/params.hpp"
#include "xlij/tape.hpp"

namespace xlij {

// Pre-norm transformer block: x + Attn(LN(x)), then x + MLP(LN(x)).
// Attention projections are bias-free; the MLP carries biases. With all
// attention and MLP weights zero the block is an exact identity.
template <class T>
struct TransformerBlock {
  Parameter<T>*ln1_g, *ln1_b, *wq, *wk, *wv, *wo, *ln2_g, *ln2_b, *w1, *b1, *w2, *b2;
  int heads = 1;
  bool causal = false;

  static TransformerBlock make(ParamStore<T>& store, const std::string& prefix, int dim,
                               int heads, int hidden, bool causal, bool trainable = true) {
    TransformerBlock b;
    b.heads = heads;
    b.causal = causal;
    b.ln1_g = &store.add(prefix + ".ln1.g", 1, dim, init::ones, trainable);
    b.ln1_b = &store.add(prefix + ".ln1.b", 1, dim, init::zeros, trainable);
    b.wq = &store.add(prefix + ".attn.wq", dim, dim, init::fan_in, trainable);
    b.wk = &store.add(prefix + ".attn.wk", dim, dim, init::fan_in, trainable);
    b.wv = &store.add(prefix + ".attn.wv", dim, dim, init::fan_in, trainable);
    b.wo = &store.add(prefix + ".attn.wo", dim, dim, init::fan_in, trainable);
    b.ln2_g = &store.add(prefix + ".ln2.g", 1, dim, init::ones, trainable);
    b.ln2_b = &store.add(prefix + ".ln2.b", 1, dim, init::zeros, trainable);
    b.w1 = &store.add(prefix + ".mlp.w1", dim, hidden, init::fan_in, trainable);
    b.b1 = &store.add(prefix + ".mlp.b1", 1, hidden, init::zeros, trainable);
    b.w2 = &store.add(prefix + ".mlp.w2", hidden, dim, init::fan_in, trainable);
    b.b2 = &store.add(prefix + ".mlp.b2", 1, dim, init::zeros, trainable);
    return b;
  }

  typename Tape<T>::Id apply(Tape<T>& t, typename Tape<T>::Id x) const {
    auto leaf = [&](Parameter<T>* p) { return t.leaf(p->value, p->trainable ? &p->grad : nullptr); };
    auto a = t.layer_norm(x, leaf(ln1_g), leaf(ln1_b));
    auto att = t.attention(t.linear(a, leaf(wq)), t.linear(a, leaf(wk)), t.linear(a, leaf(wv)),
                           heads, causal);
    auto x1 = t.add(x, t.linear(att, leaf(wo)));
    auto m = t.layer_norm(x1, leaf(ln2_g), leaf(ln2_b));
    auto h = t.linear(t.gelu(t.linear(m, leaf(w1), leaf(b1))), leaf(w2), leaf(b2));
    return t.add(x1, h);
  }
};

template <class T>
typename Tape<T>::Id param_leaf(Tape<T>& t, Parameter<T>& p) {
  return t.leaf(p.value, p.trainable ? &p.grad : nullptr);
}

inline std::vector<int> iota_ids(int n) {
  std::vector<int> v(n);
  for (int i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace xlij
