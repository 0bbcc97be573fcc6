#pragma once

#include <string>
#include <vector>

namespace xlij {

// Which fusion wiring runs between the vision hierarchy and the decoder.
enum class FusionMode { none, cli, deepstack, sli, single_k };

FusionMode fusion_mode_from_string(const std::string& s);
std::string to_string(FusionMode m);

struct PlanConfig {
  FusionMode mode = FusionMode::none;
  int vision_stride = 2;
  int decoder_stride = 2;
  int single_layer = 0;  // sampled vision layer when mode == single_k
  int sli_n = 0;         // wired depth when mode == sli; 0 means min(L_i, L_dec)
};

// The many-to-many wiring: which decoder layers inject and which vision
// layers feed them. Layers are 1-indexed from the input side; stride-s
// sampling keeps multiples of s.
struct InjectionPlan {
  FusionMode mode = FusionMode::none;
  int decoder_stride = 0;
  int vision_stride = 0;
  std::vector<int> injection_layers;       // ascending decoder indices
  std::vector<int> sampled_vision_layers;  // ascending vision indices

  size_t cells() const { return injection_layers.size() * sampled_vision_layers.size(); }
};

InjectionPlan build_injection_plan(const PlanConfig& cfg, int vision_layers, int decoder_layers);

// Named stride presets for the injection-density sweep.
struct DensityPreset {
  std::string name;
  PlanConfig plan;
};
const std::vector<DensityPreset>& density_presets();

}  // namespace xlij
