#include "xlij/synth.hpp"

#include <algorithm>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "xlij/errors.hpp"
#include "xlij/rng.hpp"

namespace xlij {

std::string to_string(TaskKind k) {
  switch (k) {
    case TaskKind::detail: return "detail";
    case TaskKind::semantic: return "semantic";
    case TaskKind::compositional: return "compositional";
  }
  return "?";
}

TaskKind task_from_string(const std::string& s) {
  if (s == "detail") return TaskKind::detail;
  if (s == "semantic") return TaskKind::semantic;
  if (s == "compositional" || s == "comp") return TaskKind::compositional;
  fail(errc::config, "unknown task kind: " + s);
}

void SynthSpec::validate() const {
  if (patch_rows < 1 || patch_cols < 1) fail(errc::config, "synth: empty patch grid");
  if (patch_rows % group_rows != 0 || patch_cols % group_cols != 0)
    fail(errc::config, "synth: mixing blocks must tile the patch grid");
  if (group_size() != textures)
    fail(errc::config, "synth: mixing-block size must equal texture count for balanced blocks");
  if (majority_count <= patches() / 2)
    fail(errc::config, "synth: majority_count must exceed half the patches");
  if (majority_count > patches()) fail(errc::config, "synth: majority_count > patches");
  if (shapes < 2 || textures < 2 || colors < 2) fail(errc::config, "synth: need >= 2 ids per attribute");
}

int patch_group(const SynthSpec& spec, int patch) {
  const int r = patch / spec.patch_cols;
  const int c = patch % spec.patch_cols;
  return (r / spec.group_rows) * (spec.patch_cols / spec.group_cols) + (c / spec.group_cols);
}

TokenLayout TokenLayout::make(const SynthSpec& spec) {
  TokenLayout t;
  t.col_base = t.row_base + spec.patch_rows;
  t.texture_answer_base = t.col_base + spec.patch_cols;
  t.scene_answer_base = t.texture_answer_base + spec.textures;
  t.comp_answer_base = t.scene_answer_base + spec.scene_classes();
  t.required_vocab = t.comp_answer_base + spec.scene_classes();
  return t;
}

std::vector<int> QuerySample::text_tokens() const {
  std::vector<int> out = question_tokens;
  out.insert(out.end(), answer_tokens.begin(), answer_tokens.end());
  return out;
}

std::pair<int, int> answer_token_range(TaskKind kind, const SynthSpec& spec) {
  const TokenLayout t = TokenLayout::make(spec);
  switch (kind) {
    case TaskKind::detail: return {t.texture_answer_base, spec.textures};
    case TaskKind::semantic: return {t.scene_answer_base, spec.scene_classes()};
    case TaskKind::compositional: return {t.comp_answer_base, spec.scene_classes()};
  }
  return {0, 0};
}

double theoretical_floor(TaskKind kind, bool bottlenecked, const SynthSpec& spec) {
  if (!bottlenecked) return 1.0;
  switch (kind) {
    case TaskKind::detail: return 1.0 / spec.textures;
    case TaskKind::semantic: return 1.0;
    case TaskKind::compositional: return 1.0 / spec.textures;
  }
  return 1.0;
}

namespace {

// Fisher-Yates with a raw counter rng; stable across library versions.
void shuffle_ids(std::vector<int>& v, uint64_t seed) {
  for (size_t i = v.size(); i > 1; --i) {
    seed = mix64(seed);
    std::swap(v[i - 1], v[bounded(seed, i)]);
  }
}

SyntheticImage build_image(uint64_t seed, int scene, const SynthSpec& spec) {
  SyntheticImage img;
  img.patch_rows = spec.patch_rows;
  img.patch_cols = spec.patch_cols;
  img.patches.resize(spec.patches());
  img.global_label = scene;

  const int maj_shape = scene / 2;
  const int maj_color = scene % 2;

  // Strict-majority shape assignment.
  std::vector<int> order(spec.patches());
  std::iota(order.begin(), order.end(), 0);
  shuffle_ids(order, derive_seed(seed, 101));
  uint64_t h = derive_seed(seed, 102);
  for (int i = 0; i < spec.patches(); ++i) {
    if (i < spec.majority_count) {
      img.patches[order[i]].shape = maj_shape;
    } else {
      h = mix64(h);
      int other = static_cast<int>(bounded(h, spec.shapes - 1));
      img.patches[order[i]].shape = other >= maj_shape ? other + 1 : other;
    }
  }

  // Strict-majority color assignment; majority colors live in {0, 1}.
  shuffle_ids(order, derive_seed(seed, 103));
  h = derive_seed(seed, 104);
  for (int i = 0; i < spec.patches(); ++i) {
    if (i < spec.majority_count) {
      img.patches[order[i]].color = maj_color;
    } else {
      h = mix64(h);
      int other = static_cast<int>(bounded(h, spec.colors - 1));
      img.patches[order[i]].color = other >= maj_color ? other + 1 : other;
    }
  }

  // Balanced textures: each mixing block holds a permutation of all ids.
  std::vector<std::vector<int>> block_members(spec.groups());
  for (int p = 0; p < spec.patches(); ++p) block_members[patch_group(spec, p)].push_back(p);
  for (int g = 0; g < spec.groups(); ++g) {
    std::vector<int> tex(spec.textures);
    std::iota(tex.begin(), tex.end(), 0);
    shuffle_ids(tex, derive_seed(seed, 200 + g));
    for (size_t i = 0; i < block_members[g].size(); ++i)
      img.patches[block_members[g][i]].texture = tex[i];
  }
  return img;
}

}  // namespace

QuerySample generate_sample(uint64_t seed, TaskKind kind, const SynthSpec& spec, int vocab_size) {
  spec.validate();
  const TokenLayout layout = TokenLayout::make(spec);
  if (vocab_size < layout.required_vocab)
    fail(errc::config, "vocab size " + std::to_string(vocab_size) + " too small, need " +
                           std::to_string(layout.required_vocab));

  QuerySample s;
  s.seed = seed;
  s.task_kind = kind;

  int scene = 0, texture = 0;
  switch (kind) {
    case TaskKind::detail:
      texture = static_cast<int>(seed % spec.textures);
      scene = static_cast<int>(bounded(derive_seed(seed, 11), spec.scene_classes()));
      s.answer_class = texture;
      break;
    case TaskKind::semantic:
      scene = static_cast<int>(seed % spec.scene_classes());
      s.answer_class = scene;
      break;
    case TaskKind::compositional: {
      const int answer = static_cast<int>(seed % spec.scene_classes());
      texture = static_cast<int>(bounded(derive_seed(seed, 12), spec.textures));
      scene = ((answer - texture) % spec.scene_classes() + spec.scene_classes()) %
              spec.scene_classes();
      s.answer_class = answer;
      break;
    }
  }

  s.image = build_image(derive_seed(seed, 13), scene, spec);

  int answer_token = 0;
  int query_row = -1, query_col = -1;
  if (kind == TaskKind::semantic) {
    answer_token = layout.scene_answer_base + scene;
  } else {
    // Query a uniformly chosen patch among those carrying the target texture.
    std::vector<int> candidates;
    for (int p = 0; p < spec.patches(); ++p)
      if (s.image.patches[p].texture == texture) candidates.push_back(p);
    const int q = candidates[bounded(derive_seed(seed, 14), candidates.size())];
    query_row = q / spec.patch_cols;
    query_col = q % spec.patch_cols;
    answer_token = kind == TaskKind::detail
                       ? layout.texture_answer_base + texture
                       : layout.comp_answer_base + s.answer_class;
  }

  const int task_token = kind == TaskKind::detail      ? layout.task_detail
                         : kind == TaskKind::semantic ? layout.task_semantic
                                                       : layout.task_comp;
  s.question_tokens = {task_token,
                       query_row < 0 ? layout.blank : layout.row_base + query_row,
                       query_col < 0 ? layout.blank : layout.col_base + query_col,
                       layout.sep};
  s.answer_tokens = {answer_token};
  s.answer_mask.assign(kTextLen, 0);
  s.answer_mask[kQuestionLen - 1] = 1;  // the sep position predicts the answer
  return s;
}

int recompute_answer(const QuerySample& s, const SynthSpec& spec) {
  const TokenLayout layout = TokenLayout::make(spec);

  // Scene from the patch multiset: strict-majority shape and color.
  std::vector<int> shape_count(spec.shapes, 0), color_count(spec.colors, 0);
  for (const Patch& p : s.image.patches) {
    ++shape_count[p.shape];
    ++color_count[p.color];
  }
  const int maj_shape = static_cast<int>(
      std::max_element(shape_count.begin(), shape_count.end()) - shape_count.begin());
  const int maj_color = static_cast<int>(
      std::max_element(color_count.begin(), color_count.end()) - color_count.begin());
  const int scene = maj_shape * 2 + maj_color;

  if (s.task_kind == TaskKind::semantic) return scene;

  const int row = s.question_tokens[1] - layout.row_base;
  const int col = s.question_tokens[2] - layout.col_base;
  const int texture = s.image.patches[row * spec.patch_cols + col].texture;
  if (s.task_kind == TaskKind::detail) return texture;
  return (scene + texture) % spec.scene_classes();
}

// ---- record framing ---------------------------------------------------------

namespace {

template <class U>
void put(std::ostream& out, U v) {
  unsigned char buf[sizeof(U)];
  for (size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

template <class U>
bool get(std::istream& in, U& v) {
  unsigned char buf[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(U))) return false;
  v = 0;
  for (size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return true;
}

void put_tokens(std::ostream& out, const std::vector<int>& v) {
  put<uint32_t>(out, static_cast<uint32_t>(v.size()));
  for (int t : v) put<uint16_t>(out, static_cast<uint16_t>(t));
}

bool get_tokens(std::istream& in, std::vector<int>& v) {
  uint32_t n = 0;
  if (!get(in, n)) return false;
  if (n > 1u << 20) return false;
  v.resize(n);
  for (uint32_t i = 0; i < n; ++i) {
    uint16_t t = 0;
    if (!get(in, t)) return false;
    v[i] = t;
  }
  return true;
}

}  // namespace

void write_record(std::ostream& out, const QuerySample& s) {
  std::string body;
  {
    std::ostringstream os(std::ios::binary);
    put<uint8_t>(os, static_cast<uint8_t>(s.task_kind));
    put<uint8_t>(os, static_cast<uint8_t>(s.image.patch_rows));
    put<uint8_t>(os, static_cast<uint8_t>(s.image.patch_cols));
    put<uint8_t>(os, 0);
    put<uint16_t>(os, static_cast<uint16_t>(s.image.global_label));
    put<uint16_t>(os, static_cast<uint16_t>(s.answer_class));
    put<uint64_t>(os, s.seed);
    put<uint32_t>(os, static_cast<uint32_t>(s.image.patches.size()));
    for (const Patch& p : s.image.patches) {
      put<uint8_t>(os, static_cast<uint8_t>(p.shape));
      put<uint8_t>(os, static_cast<uint8_t>(p.texture));
      put<uint8_t>(os, static_cast<uint8_t>(p.color));
    }
    put_tokens(os, s.question_tokens);
    put_tokens(os, s.answer_tokens);
    put<uint32_t>(os, static_cast<uint32_t>(s.answer_mask.size()));
    for (uint8_t m : s.answer_mask) put<uint8_t>(os, m);
    body = os.str();
  }
  put<uint32_t>(out, static_cast<uint32_t>(body.size()));
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!out) fail(errc::io, "sample record: write failed");
}

bool read_record(std::istream& in, QuerySample& s) {
  uint32_t len = 0;
  if (!get(in, len)) {
    if (in.eof()) return false;
    fail(errc::io, "sample record: unreadable frame length");
  }
  std::string body(len, '\0');
  if (!in.read(body.data(), len)) fail(errc::io, "sample record: truncated frame");
  std::istringstream is(body, std::ios::binary);

  uint8_t kind = 0, rows = 0, cols = 0, pad = 0;
  uint16_t label = 0, answer_class = 0;
  uint64_t seed = 0;
  uint32_t n_patches = 0;
  if (!get(is, kind) || !get(is, rows) || !get(is, cols) || !get(is, pad) || !get(is, label) ||
      !get(is, answer_class) || !get(is, seed) || !get(is, n_patches))
    fail(errc::io, "sample record: malformed header");
  if (kind > 2 || n_patches != static_cast<uint32_t>(rows) * cols)
    fail(errc::io, "sample record: inconsistent header");
  s.task_kind = static_cast<TaskKind>(kind);
  s.image.patch_rows = rows;
  s.image.patch_cols = cols;
  s.image.global_label = label;
  s.answer_class = answer_class;
  s.seed = seed;
  s.image.patches.resize(n_patches);
  for (auto& p : s.image.patches) {
    uint8_t sh = 0, tx = 0, co = 0;
    if (!get(is, sh) || !get(is, tx) || !get(is, co))
      fail(errc::io, "sample record: truncated patches");
    p.shape = sh;
    p.texture = tx;
    p.color = co;
  }
  if (!get_tokens(is, s.question_tokens) || !get_tokens(is, s.answer_tokens))
    fail(errc::io, "sample record: truncated tokens");
  uint32_t n_mask = 0;
  if (!get(is, n_mask)) fail(errc::io, "sample record: truncated mask");
  s.answer_mask.resize(n_mask);
  for (auto& m : s.answer_mask) {
    uint8_t b = 0;
    if (!get(is, b)) fail(errc::io, "sample record: truncated mask");
    m = b;
  }
  return true;
}

}  // namespace xlij
