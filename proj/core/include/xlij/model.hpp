#pragma once

#include <memory>
#include <vector>

#include "xlij/baselines.hpp"
#include "xlij/config.hpp"
#include "xlij/decoder.hpp"
#include "xlij/encoder.hpp"
#include "xlij/fusion.hpp"
#include "xlij/plan.hpp"
#include "xlij/projector.hpp"
#include "xlij/synth.hpp"

namespace xlij {

// The full system: vision encoder, baseline projector, decoder, and the
// fusion machinery selected by the injection plan. The visual prefix fed at
// the embedding layer is always the base projection of the final vision
// layer; plans only change what happens at the injection points.
template <class T>
class CliModel {
 public:
  explicit CliModel(const RunConfig& cfg)
      : cfg_(cfg),
        spec_(cfg.synth()),
        plan_(build_injection_plan(cfg.plan(), cfg.vision_layers, cfg.decoder_layers)),
        store_(cfg.seed) {
    spec_.validate();

    VisionEncoderConfig ec;
    ec.num_layers = cfg.vision_layers;
    ec.embed_dim = cfg.vision_dim;
    ec.num_heads = cfg.vision_heads;
    ec.patch_rows = cfg.patch_rows;
    ec.patch_cols = cfg.patch_cols;
    ec.attr_dim = spec_.attr_dim();
    ec.mlp_hidden = cfg.vision_mlp_hidden;
    ec.bottleneck_layer = cfg.bottleneck_layer;
    ec.mix_groups.resize(spec_.patches());
    for (int p = 0; p < spec_.patches(); ++p) ec.mix_groups[p] = patch_group(spec_, p);
    encoder_ = std::make_unique<VisionEncoder<T>>(store_, ec);

    projector_ = std::make_unique<BaselineProjector<T>>(store_, cfg.vision_dim, cfg.embed_dim,
                                                        cfg.full_projector_finetune);

    DecoderConfig dc;
    dc.num_layers = cfg.decoder_layers;
    dc.embed_dim = cfg.embed_dim;
    dc.num_heads = cfg.decoder_heads;
    dc.vocab_size = cfg.vocab_size;
    dc.max_seq = cfg.seq_len();
    dc.mlp_hidden = cfg.decoder_mlp_hidden;
    decoder_ = std::make_unique<DecoderLM<T>>(store_, dc);

    const FusionMode mode = plan_.mode;
    const bool wants_adapters =
        ((mode == FusionMode::cli || mode == FusionMode::single_k) && cfg.amp_enabled) ||
        mode == FusionMode::sli;
    if (wants_adapters)
      for (int l : plan_.sampled_vision_layers)
        adapters_.push_back(LoraAdapter<T>::make(store_, l, cfg.vision_dim, cfg.embed_dim,
                                                 cfg.lora_rank, static_cast<T>(cfg.lora_alpha)));
    if ((mode == FusionMode::cli || mode == FusionMode::single_k) && cfg.agf_enabled)
      for (int l : plan_.injection_layers)
        agf_.emplace_back(store_, l, cfg.embed_dim, cfg.probe_heads,
                          static_cast<T>(cfg.gate_bias_init));
    if (mode == FusionMode::sli) sli_.n = static_cast<int>(plan_.injection_layers.size());
  }

  // Logits over the fused [visual prefix; text] sequence.
  typename Tape<T>::Id forward(Tape<T>& t, const QuerySample& sample, GateTrace* trace = nullptr,
                               const TraceMeta& meta = {}) const {
    auto feats = t.input(patch_features<T>(sample.image, spec_));
    auto layers = encoder_->encode(t, feats);
    auto prefix = projector_->project(t, layers.back());
    const std::vector<int> text = sample.text_tokens();
    const VisualMask mask = VisualMask::prefix(spec_.patches(),
                                               spec_.patches() + static_cast<int>(text.size()));

    std::vector<InjectionHook<T>> hooks;
    switch (plan_.mode) {
      case FusionMode::none:
        break;
      case FusionMode::cli:
      case FusionMode::single_k: {
        auto hierarchy = sample_hierarchy<T>(layers, plan_.sampled_vision_layers);
        ProjectedFeatureSet<T> projected =
            cfg_.amp_enabled ? project_adaptive(t, *projector_, adapters_, hierarchy)
                             : project_base_set(t, *projector_, hierarchy);
        for (size_t i = 0; i < plan_.injection_layers.size(); ++i) {
          const int layer = plan_.injection_layers[i];
          if (cfg_.agf_enabled) {
            const AgfModule<T>* agf = &agf_[i];
            hooks.push_back({layer, [agf, projected, mask, trace, meta](
                                        Tape<T>& tt, typename Tape<T>::Id h) {
                               return apply_injection_point(tt, *agf, h, projected, mask, trace,
                                                            meta);
                             }});
          } else {
            hooks.push_back({layer, [layer, projected, mask, trace, meta](
                                        Tape<T>& tt, typename Tape<T>::Id h) {
                               return apply_injection_ungated(tt, layer, h, projected, mask,
                                                              trace, meta);
                             }});
          }
        }
        break;
      }
      case FusionMode::deepstack: {
        for (int layer : plan_.injection_layers)
          hooks.push_back({layer, [prefix, mask](Tape<T>& tt, typename Tape<T>::Id h) {
                             return deepstack_inject(tt, h, prefix, mask);
                           }});
        break;
      }
      case FusionMode::sli: {
        auto hierarchy = sample_hierarchy<T>(layers, plan_.sampled_vision_layers);
        ProjectedFeatureSet<T> projected = project_adaptive(t, *projector_, adapters_, hierarchy);
        const SliConfig sli = sli_;
        for (int layer : plan_.injection_layers)
          hooks.push_back({layer, [sli, layer, projected, mask](Tape<T>& tt,
                                                                typename Tape<T>::Id h) {
                             return sli_inject(tt, sli, layer, h, projected, mask);
                           }});
        break;
      }
    }
    return decoder_->forward(t, prefix, text, hooks);
  }

  // Mean NLL over the sample's supervised positions.
  typename Tape<T>::Id loss(Tape<T>& t, const QuerySample& sample, GateTrace* trace = nullptr,
                            const TraceMeta& meta = {}) const {
    auto logits = forward(t, sample, trace, meta);
    std::vector<int> positions, targets;
    const std::vector<int> text = sample.text_tokens();
    for (size_t j = 0; j + 1 < text.size(); ++j) {
      if (j < sample.answer_mask.size() && sample.answer_mask[j]) {
        positions.push_back(spec_.patches() + static_cast<int>(j));
        targets.push_back(text[j + 1]);
      }
    }
    return t.cross_entropy(logits, positions, targets);
  }

  // Greedy argmax prediction at the answer slot, restricted to the task's
  // answer tokens; returns the predicted class index.
  int predict(Tape<T>& t, typename Tape<T>::Id logits, const QuerySample& sample) const {
    const auto [first, count] = answer_token_range(sample.task_kind, spec_);
    const int row = spec_.patches() + kQuestionLen - 1;
    const Mat<T>& lv = t.val(logits);
    int best = 0;
    T best_v = lv.at(row, first);
    for (int c = 1; c < count; ++c) {
      if (lv.at(row, first + c) > best_v) {
        best_v = lv.at(row, first + c);
        best = c;
      }
    }
    return best;
  }

  const RunConfig& config() const { return cfg_; }
  const SynthSpec& synth_spec() const { return spec_; }
  const InjectionPlan& plan() const { return plan_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }
  VisionEncoder<T>& encoder() { return *encoder_; }
  DecoderLM<T>& decoder() { return *decoder_; }
  BaselineProjector<T>& projector() { return *projector_; }
  std::vector<LoraAdapter<T>>& adapters() { return adapters_; }
  std::vector<AgfModule<T>>& agf_modules() { return agf_; }

 private:
  RunConfig cfg_;
  SynthSpec spec_;
  InjectionPlan plan_;
  ParamStore<T> store_;
  std::unique_ptr<VisionEncoder<T>> encoder_;
  std::unique_ptr<BaselineProjector<T>> projector_;
  std::unique_ptr<DecoderLM<T>> decoder_;
  std::vector<LoraAdapter<T>> adapters_;
  std::vector<AgfModule<T>> agf_;
  SliConfig sli_;
};

}  // namespace xlij
