#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xlij/plan.hpp"
#include "xlij/synth.hpp"

namespace xlij {

// One run's complete configuration: model dims, fusion wiring, component
// switches, and the training/eval protocol. Serializes to plain-text
// key=value lines; the same text is embedded in checkpoints.
struct RunConfig {
  // model
  int vision_layers = 8;
  int vision_dim = 32;
  int vision_heads = 2;
  int patch_rows = 4;
  int patch_cols = 4;
  int vision_mlp_hidden = 0;
  int bottleneck_layer = 4;  // 0 disables the detail bottleneck
  int decoder_layers = 8;
  int embed_dim = 64;
  int decoder_heads = 4;
  int vocab_size = 64;
  int decoder_mlp_hidden = 0;

  // fusion wiring
  std::string fusion_mode = "none";
  int vision_stride = 2;
  int decoder_stride = 2;
  int single_layer = 4;
  int sli_n = 0;  // 0 -> min(vision_layers, decoder_layers)

  // adaptive multi-projection
  bool amp_enabled = false;
  int lora_rank = 4;
  double lora_alpha = 4.0;
  bool full_projector_finetune = false;

  // adaptive gating fusion
  bool agf_enabled = false;
  int probe_heads = 2;
  double gate_bias_init = 0.0;

  // training protocol
  uint64_t seed = 0;
  bool has_seed = false;  // train.seed is mandatory for runs
  int steps = 3000;
  int batch_size = 32;
  double lr = 0.05;
  std::string optimizer = "sgd";  // sgd | adam
  std::string precision = "f32";  // f32 | f64
  double weight_detail = 0.4;
  double weight_semantic = 0.4;
  double weight_comp = 0.2;
  int log_every = 50;
  int eval_every = 500;
  int quick_eval_samples = 96;
  uint64_t train_seed_start = 0;
  int threads = 1;

  // evaluation protocol
  int eval_samples = 2048;
  uint64_t eval_seed_start = 1048576;
  std::string eval_task = "detail";

  SynthSpec synth() const;
  PlanConfig plan() const;
  FusionMode mode() const { return fusion_mode_from_string(fusion_mode); }
  int text_len() const { return kTextLen; }
  int patches() const { return patch_rows * patch_cols; }
  int seq_len() const { return patches() + text_len(); }

  // [start, end) of data seeds the training protocol consumes.
  uint64_t train_seed_end() const {
    return train_seed_start + static_cast<uint64_t>(steps) * batch_size;
  }

  void validate() const;  // structural checks; requires has_seed

  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  std::string to_text() const;

  static RunConfig parse_text(const std::string& text);
  static RunConfig load_file(const std::string& path,
                             const std::vector<std::string>& overrides = {});

  static std::vector<std::string> known_keys();
};

}  // namespace xlij
