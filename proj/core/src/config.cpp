#include "xlij/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <variant>

#include "xlij/errors.hpp"

namespace xlij {

namespace {

struct Field {
  const char* key;
  std::variant<int RunConfig::*, double RunConfig::*, bool RunConfig::*, uint64_t RunConfig::*,
               std::string RunConfig::*>
      member;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      {"model.vision_layers", &RunConfig::vision_layers},
      {"model.vision_dim", &RunConfig::vision_dim},
      {"model.vision_heads", &RunConfig::vision_heads},
      {"model.patch_rows", &RunConfig::patch_rows},
      {"model.patch_cols", &RunConfig::patch_cols},
      {"model.vision_mlp_hidden", &RunConfig::vision_mlp_hidden},
      {"model.bottleneck_layer", &RunConfig::bottleneck_layer},
      {"model.decoder_layers", &RunConfig::decoder_layers},
      {"model.embed_dim", &RunConfig::embed_dim},
      {"model.decoder_heads", &RunConfig::decoder_heads},
      {"model.vocab_size", &RunConfig::vocab_size},
      {"model.decoder_mlp_hidden", &RunConfig::decoder_mlp_hidden},
      {"fusion.mode", &RunConfig::fusion_mode},
      {"fusion.vision_stride", &RunConfig::vision_stride},
      {"fusion.decoder_stride", &RunConfig::decoder_stride},
      {"fusion.single_layer", &RunConfig::single_layer},
      {"fusion.sli_n", &RunConfig::sli_n},
      {"amp.enabled", &RunConfig::amp_enabled},
      {"amp.rank", &RunConfig::lora_rank},
      {"amp.alpha", &RunConfig::lora_alpha},
      {"amp.full_projector_finetune", &RunConfig::full_projector_finetune},
      {"agf.enabled", &RunConfig::agf_enabled},
      {"agf.probe_heads", &RunConfig::probe_heads},
      {"agf.gate_bias_init", &RunConfig::gate_bias_init},
      {"train.seed", &RunConfig::seed},
      {"train.steps", &RunConfig::steps},
      {"train.batch_size", &RunConfig::batch_size},
      {"train.lr", &RunConfig::lr},
      {"train.optimizer", &RunConfig::optimizer},
      {"train.precision", &RunConfig::precision},
      {"train.weight_detail", &RunConfig::weight_detail},
      {"train.weight_semantic", &RunConfig::weight_semantic},
      {"train.weight_comp", &RunConfig::weight_comp},
      {"train.log_every", &RunConfig::log_every},
      {"train.eval_every", &RunConfig::eval_every},
      {"train.quick_eval_samples", &RunConfig::quick_eval_samples},
      {"train.seed_start", &RunConfig::train_seed_start},
      {"train.threads", &RunConfig::threads},
      {"eval.samples", &RunConfig::eval_samples},
      {"eval.seed_start", &RunConfig::eval_seed_start},
      {"eval.task", &RunConfig::eval_task},
  };
  return f;
}

int parse_int(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    int x = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    fail(errc::config, "config: bad integer for " + key + ": '" + v + "'");
  }
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    uint64_t x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    fail(errc::config, "config: bad unsigned for " + key + ": '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    fail(errc::config, "config: bad number for " + key + ": '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  fail(errc::config, "config: bad boolean for " + key + ": '" + v + "'");
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const Field& f : fields()) {
    if (key != f.key) continue;
    std::visit(
        [&](auto member) {
          using M = std::remove_reference_t<decltype(this->*member)>;
          if constexpr (std::is_same_v<M, int>)
            this->*member = parse_int(key, value);
          else if constexpr (std::is_same_v<M, double>)
            this->*member = parse_double(key, value);
          else if constexpr (std::is_same_v<M, bool>)
            this->*member = parse_bool(key, value);
          else if constexpr (std::is_same_v<M, uint64_t>)
            this->*member = parse_u64(key, value);
          else
            this->*member = value;
        },
        f.member);
    if (key == "train.seed") has_seed = true;
    return;
  }
  fail(errc::config, "config: unknown key '" + key + "'");
}

std::string RunConfig::get(const std::string& key) const {
  for (const Field& f : fields()) {
    if (key != f.key) continue;
    return std::visit(
        [&](auto member) -> std::string {
          using M = std::remove_reference_t<decltype(this->*member)>;
          if constexpr (std::is_same_v<M, int>)
            return std::to_string(this->*member);
          else if constexpr (std::is_same_v<M, double>)
            return format_double(this->*member);
          else if constexpr (std::is_same_v<M, bool>)
            return this->*member ? "true" : "false";
          else if constexpr (std::is_same_v<M, uint64_t>)
            return std::to_string(this->*member);
          else
            return this->*member;
        },
        f.member);
  }
  fail(errc::config, "config: unknown key '" + key + "'");
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  for (const Field& f : fields()) os << f.key << "=" << get(f.key) << "\n";
  return os.str();
}

RunConfig RunConfig::parse_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      fail(errc::config, "config line " + std::to_string(lineno) + ": expected key=value");
    cfg.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return cfg;
}

RunConfig RunConfig::load_file(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) fail(errc::config, "config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig cfg = parse_text(ss.str());
  for (const std::string& ov : overrides) {
    const size_t eq = ov.find('=');
    if (eq == std::string::npos) fail(errc::config, "--set expects key=value, got '" + ov + "'");
    cfg.set(trim(ov.substr(0, eq)), trim(ov.substr(eq + 1)));
  }
  return cfg;
}

std::vector<std::string> RunConfig::known_keys() {
  std::vector<std::string> keys;
  for (const Field& f : fields()) keys.emplace_back(f.key);
  return keys;
}

SynthSpec RunConfig::synth() const {
  SynthSpec s;
  s.patch_rows = patch_rows;
  s.patch_cols = patch_cols;
  s.majority_count = s.patches() / 2 + std::max(1, s.patches() / 8);
  return s;
}

PlanConfig RunConfig::plan() const {
  PlanConfig p;
  p.mode = mode();
  p.vision_stride = vision_stride;
  p.decoder_stride = decoder_stride;
  p.single_layer = single_layer;
  p.sli_n = sli_n;
  return p;
}

void RunConfig::validate() const {
  if (!has_seed) fail(errc::config, "config: train.seed is mandatory");
  if (batch_size < 1) fail(errc::config, "config: batch_size must be >= 1");
  if (steps < 0) fail(errc::config, "config: steps must be >= 0");
  if (threads < 1) fail(errc::config, "config: threads must be >= 1");
  if (precision != "f32" && precision != "f64")
    fail(errc::config, "config: precision must be f32 or f64");
  if (optimizer != "sgd" && optimizer != "adam")
    fail(errc::config, "config: optimizer must be sgd or adam");
  if (weight_detail < 0 || weight_semantic < 0 || weight_comp < 0 ||
      weight_detail + weight_semantic + weight_comp <= 0)
    fail(errc::config, "config: task mixture weights must be nonnegative with positive sum");
  if (lr <= 0) fail(errc::config, "config: lr must be positive");
  synth().validate();
  (void)mode();
  (void)task_from_string(eval_task);
}

}  // namespace xlij
