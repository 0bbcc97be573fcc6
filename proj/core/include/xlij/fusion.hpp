#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "xlij/nn.hpp"
#include "xlij/params.hpp"
#include "xlij/projector.hpp"
#include "xlij/tape.hpp"

namespace xlij {

// Per-position flags marking the visual-prefix rows of the fused sequence.
struct VisualMask {
  std::vector<uint8_t> flags;

  static VisualMask prefix(int n_visual, int total) {
    if (n_visual < 0 || n_visual > total) fail(errc::config, "visual mask: bad prefix length");
    VisualMask m;
    m.flags.assign(total, 0);
    for (int i = 0; i < n_visual; ++i) m.flags[i] = 1;
    return m;
  }

  int popcount() const {
    int n = 0;
    for (uint8_t f : flags) n += f != 0;
    return n;
  }

  std::vector<int> positions() const {
    std::vector<int> p;
    for (size_t i = 0; i < flags.size(); ++i)
      if (flags[i]) p.push_back(static_cast<int>(i));
    return p;
  }
};

// Recorded gate weights, one entry per (injection layer, vision layer,
// batch item) per forward pass.
struct GateTrace {
  struct Entry {
    int decoder_layer = 0;
    int vision_layer = 0;
    int64_t batch_index = 0;
    int64_t step = 0;
    double weight = 0.0;
  };
  std::vector<Entry> entries;
};

struct TraceMeta {
  int64_t batch_index = 0;
  int64_t step = 0;
};

// One probe's independent attention parameter set (no biases, no positional
// encoding inside the probe).
template <class T>
struct ProbeAttention {
  Parameter<T>*wq, *wk, *wv, *wo;

  static ProbeAttention make(ParamStore<T>& store, const std::string& prefix, int dim) {
    ProbeAttention p;
    p.wq = &store.add(prefix + ".wq", dim, dim, init::fan_in);
    p.wk = &store.add(prefix + ".wk", dim, dim, init::fan_in);
    p.wv = &store.add(prefix + ".wv", dim, dim, init::fan_in);
    p.wo = &store.add(prefix + ".wo", dim, dim, init::fan_in);
    return p;
  }
};

// Multi-head attention with a single learnable query row distilling a token
// set into one vector.
template <class T>
typename Tape<T>::Id attend_probe(Tape<T>& t, typename Tape<T>::Id query,
                                  typename Tape<T>::Id tokens, const ProbeAttention<T>& params,
                                  int heads) {
  if (t.val(tokens).rows < 1) fail(errc::config, "attend_probe: empty token set");
  auto q = t.linear(query, param_leaf(t, *params.wq));
  auto k = t.linear(tokens, param_leaf(t, *params.wk));
  auto v = t.linear(tokens, param_leaf(t, *params.wv));
  auto a = t.attention(q, k, v, heads, /*causal=*/false);
  return t.linear(a, param_leaf(t, *params.wo));
}

// Adaptive gating for one injection point: two probes and a linear+sigmoid
// controller producing the scalar fusion weight.
template <class T>
class AgfModule {
 public:
  AgfModule(ParamStore<T>& store, int decoder_layer, int dim, int probe_heads, T gate_bias_init)
      : decoder_layer_(decoder_layer), probe_heads_(probe_heads) {
    const std::string prefix = "agf.layer" + std::to_string(decoder_layer);
    q_v_ = &store.add(prefix + ".q_v", 1, dim, init::embedding);
    q_h_ = &store.add(prefix + ".q_h", 1, dim, init::embedding);
    vprobe_ = ProbeAttention<T>::make(store, prefix + ".vprobe", dim);
    hprobe_ = ProbeAttention<T>::make(store, prefix + ".hprobe", dim);
    gate_w_ = &store.add(prefix + ".gate.w", 2 * dim, 1, init::fan_in);
    gate_b_ = &store.add(prefix + ".gate.b", 1, 1, init::zeros);
    gate_b_->value.data[0] = gate_bias_init;
  }

  int decoder_layer() const { return decoder_layer_; }
  int probe_heads() const { return probe_heads_; }

  typename Tape<T>::Id attend_visual(Tape<T>& t, typename Tape<T>::Id tokens) const {
    return attend_probe(t, param_leaf(t, *q_v_), tokens, vprobe_, probe_heads_);
  }
  typename Tape<T>::Id attend_hidden(Tape<T>& t, typename Tape<T>::Id hidden) const {
    return attend_probe(t, param_leaf(t, *q_h_), hidden, hprobe_, probe_heads_);
  }

  // W = sigmoid(gate_w . [v_att; h_att] + gate_b), a scalar in [0, 1].
  typename Tape<T>::Id gate_weight(Tape<T>& t, typename Tape<T>::Id v_att,
                                   typename Tape<T>::Id h_att) const {
    auto z = t.linear(t.concat_cols(v_att, h_att), param_leaf(t, *gate_w_),
                      param_leaf(t, *gate_b_));
    return t.sigmoid(z);
  }

  Parameter<T>& gate_bias() { return *gate_b_; }
  Parameter<T>& gate_w() { return *gate_w_; }

  // Test/ablation clamp: when set, the gate output is replaced by this
  // constant (no gate parameters enter the graph).
  std::optional<T> force_gate;

 private:
  int decoder_layer_ = 0;
  int probe_heads_ = 0;
  Parameter<T>*q_v_, *q_h_;
  ProbeAttention<T> vprobe_, hprobe_;
  Parameter<T>*gate_w_, *gate_b_;
};

// h' = h outside the mask; masked rows become h + W * v_hat, row-aligned to
// the visual prefix order. gate == none means an ungated (W = 1) update.
template <class T>
typename Tape<T>::Id gated_update(Tape<T>& t, typename Tape<T>::Id h,
                                  typename Tape<T>::Id v_hat, typename Tape<T>::Id gate,
                                  const VisualMask& mask) {
  if (static_cast<int>(mask.flags.size()) != t.val(h).rows)
    fail(errc::config, "gated_update: mask length vs hidden rows");
  return t.masked_add(h, v_hat, mask.positions(), gate);
}

// Sequential pass over the whole projected hierarchy at one injection point,
// ascending by vision layer; each gate sees the hidden state already updated
// by the layers before it. Records every weight into the trace.
template <class T>
typename Tape<T>::Id apply_injection_point(Tape<T>& t, const AgfModule<T>& agf,
                                           typename Tape<T>::Id h,
                                           const ProjectedFeatureSet<T>& projected,
                                           const VisualMask& mask, GateTrace* trace,
                                           const TraceMeta& meta = {}) {
  if (projected.size() == 0) fail(errc::config, "injection point: empty projected feature set");
  Mat<T> forced(1, 1);
  for (size_t i = 0; i < projected.size(); ++i) {
    typename Tape<T>::Id w;
    if (agf.force_gate) {
      forced.data[0] = *agf.force_gate;
      w = t.input(forced);
    } else {
      auto v_att = agf.attend_visual(t, projected.features[i]);
      auto h_att = agf.attend_hidden(t, h);
      w = agf.gate_weight(t, v_att, h_att);
    }
    if (trace)
      trace->entries.push_back({agf.decoder_layer(), projected.layers[i], meta.batch_index,
                                meta.step, static_cast<double>(t.val(w).data[0])});
    h = gated_update(t, h, projected.features[i], w, mask);
  }
  return h;
}

// Gating disabled (the multi-projection-only ablation): the whole hierarchy
// is added ungated, in the same sequential order.
template <class T>
typename Tape<T>::Id apply_injection_ungated(Tape<T>& t, int decoder_layer,
                                             typename Tape<T>::Id h,
                                             const ProjectedFeatureSet<T>& projected,
                                             const VisualMask& mask, GateTrace* trace,
                                             const TraceMeta& meta = {}) {
  if (projected.size() == 0) fail(errc::config, "injection point: empty projected feature set");
  for (size_t i = 0; i < projected.size(); ++i) {
    if (trace)
      trace->entries.push_back(
          {decoder_layer, projected.layers[i], meta.batch_index, meta.step, 1.0});
    h = gated_update(t, h, projected.features[i], Tape<T>::none, mask);
  }
  return h;
}

}  // namespace xlij
