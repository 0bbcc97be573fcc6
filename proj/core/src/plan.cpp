#include "xlij/plan.hpp"

#include <algorithm>

#include "xlij/errors.hpp"

namespace xlij {

FusionMode fusion_mode_from_string(const std::string& s) {
  if (s == "none") return FusionMode::none;
  if (s == "cli") return FusionMode::cli;
  if (s == "deepstack") return FusionMode::deepstack;
  if (s == "sli") return FusionMode::sli;
  if (s == "single_k") return FusionMode::single_k;
  fail(errc::config, "unknown fusion mode: " + s);
}

std::string to_string(FusionMode m) {
  switch (m) {
    case FusionMode::none: return "none";
    case FusionMode::cli: return "cli";
    case FusionMode::deepstack: return "deepstack";
    case FusionMode::sli: return "sli";
    case FusionMode::single_k: return "single_k";
  }
  return "?";
}

namespace {
std::vector<int> stride_layers(int stride, int depth) {
  std::vector<int> out;
  for (int l = stride; l <= depth; l += stride) out.push_back(l);
  return out;
}
}  // namespace

InjectionPlan build_injection_plan(const PlanConfig& cfg, int vision_layers, int decoder_layers) {
  if (vision_layers < 1 || decoder_layers < 1)
    fail(errc::config, "injection plan: model depths must be >= 1");

  InjectionPlan plan;
  plan.mode = cfg.mode;
  plan.decoder_stride = cfg.decoder_stride;
  plan.vision_stride = cfg.vision_stride;

  switch (cfg.mode) {
    case FusionMode::none:
      return plan;  // pure baseline: no injection points
    case FusionMode::cli:
      if (cfg.vision_stride < 1 || cfg.decoder_stride < 1)
        fail(errc::config, "injection plan: strides must be >= 1");
      plan.sampled_vision_layers = stride_layers(cfg.vision_stride, vision_layers);
      plan.injection_layers = stride_layers(cfg.decoder_stride, decoder_layers);
      break;
    case FusionMode::single_k:
      if (cfg.single_layer < 1 || cfg.single_layer > vision_layers)
        fail(errc::config, "injection plan: single_k layer " + std::to_string(cfg.single_layer) +
                               " outside [1, " + std::to_string(vision_layers) + "]");
      if (cfg.decoder_stride < 1) fail(errc::config, "injection plan: strides must be >= 1");
      plan.sampled_vision_layers = {cfg.single_layer};
      plan.injection_layers = stride_layers(cfg.decoder_stride, decoder_layers);
      break;
    case FusionMode::deepstack:
      if (cfg.decoder_stride < 1) fail(errc::config, "injection plan: strides must be >= 1");
      plan.sampled_vision_layers = {vision_layers};  // final-layer features only
      plan.injection_layers = stride_layers(cfg.decoder_stride, decoder_layers);
      break;
    case FusionMode::sli: {
      int n = cfg.sli_n > 0 ? cfg.sli_n : std::min(vision_layers, decoder_layers);
      if (n > std::min(vision_layers, decoder_layers))
        fail(errc::config, "injection plan: sli depth exceeds min(vision, decoder) layers");
      for (int l = 1; l <= n; ++l) {
        plan.injection_layers.push_back(l);
        plan.sampled_vision_layers.push_back(l);
      }
      // n == 0 degenerates to the baseline; allowed.
      return plan;
    }
  }

  if (plan.sampled_vision_layers.empty())
    fail(errc::config, "injection plan: empty sampled vision set (stride " +
                           std::to_string(cfg.vision_stride) + " over " +
                           std::to_string(vision_layers) + " layers)");
  if (plan.injection_layers.empty())
    fail(errc::config, "injection plan: empty injection set (stride " +
                           std::to_string(cfg.decoder_stride) + " over " +
                           std::to_string(decoder_layers) + " layers)");
  return plan;
}

const std::vector<DensityPreset>& density_presets() {
  static const std::vector<DensityPreset> presets = [] {
    std::vector<DensityPreset> v;
    auto strides = [](int vs, int ds) {
      PlanConfig c;
      c.mode = FusionMode::cli;
      c.vision_stride = vs;
      c.decoder_stride = ds;
      return c;
    };
    v.push_back({"2/2", strides(2, 2)});
    v.push_back({"4/4", strides(4, 4)});
    v.push_back({"8/7", strides(8, 7)});
    v.push_back({"12/14", strides(12, 14)});
    PlanConfig single;
    single.mode = FusionMode::single_k;
    single.single_layer = 14;
    single.decoder_stride = 2;
    v.push_back({"single-14", single});
    return v;
  }();
  return presets;
}

}  // namespace xlij
