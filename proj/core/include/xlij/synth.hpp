#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "xlij/mat.hpp"

namespace xlij {

enum class TaskKind : uint8_t { detail = 0, semantic = 1, compositional = 2 };

std::string to_string(TaskKind k);
TaskKind task_from_string(const std::string& s);

// Attribute layout of the generated scenes.
//
// Textures are the per-patch "detail" channel: every mixing block holds a
// random permutation of all texture ids, so the image-level (and per-block)
// texture histogram is constant and which patch carries which texture is the
// only texture information in the image. Shapes and colors carry the scene
// class: a strict majority shape and a strict majority color encode
// global_label = majority_shape * 2 + majority_color, with majority colors
// restricted to {0, 1}.
struct SynthSpec {
  int patch_rows = 4;
  int patch_cols = 4;
  int group_rows = 2;  // mixing-block geometry, shared with the encoder bottleneck
  int group_cols = 2;
  int shapes = 4;
  int textures = 4;
  int colors = 4;
  int majority_count = 10;  // patches carrying the majority shape / color

  int patches() const { return patch_rows * patch_cols; }
  int groups() const { return (patch_rows / group_rows) * (patch_cols / group_cols); }
  int group_size() const { return group_rows * group_cols; }
  int scene_classes() const { return shapes * 2; }
  int attr_dim() const { return shapes + textures + colors; }

  void validate() const;
};

// Group index of patch p under the fixed mixing-block partition.
int patch_group(const SynthSpec& spec, int patch);

struct Patch {
  int shape = 0;
  int texture = 0;
  int color = 0;
};

struct SyntheticImage {
  int patch_rows = 0;
  int patch_cols = 0;
  std::vector<Patch> patches;
  int global_label = 0;  // deterministic function of the patch multiset
};

// Token vocabulary layout for the fixed question templates.
struct TokenLayout {
  int task_detail = 1;
  int task_semantic = 2;
  int task_comp = 3;
  int sep = 4;
  int blank = 5;
  int row_base = 6;
  int col_base = 0;
  int texture_answer_base = 0;
  int scene_answer_base = 0;
  int comp_answer_base = 0;
  int required_vocab = 0;

  static TokenLayout make(const SynthSpec& spec);
};

// One supervised example: image, a fixed-template question, the answer
// token, and per-position flags marking which next-token predictions are
// supervised. Text length is constant: [task, row, col, sep, answer].
struct QuerySample {
  SyntheticImage image;
  std::vector<int> question_tokens;
  std::vector<int> answer_tokens;
  TaskKind task_kind = TaskKind::detail;
  std::vector<uint8_t> answer_mask;  // over [question; answer] positions
  int answer_class = 0;              // class index within the task's answer set
  uint64_t seed = 0;

  std::vector<int> text_tokens() const;  // question + answer
};

inline constexpr int kQuestionLen = 4;
inline constexpr int kTextLen = 5;

// Deterministic in `seed`. Answer classes are exactly balanced over any run
// of consecutive seeds whose length is a multiple of the class count.
QuerySample generate_sample(uint64_t seed, TaskKind kind, const SynthSpec& spec, int vocab_size);

// Answer-token range for a task: [first, first + count).
std::pair<int, int> answer_token_range(TaskKind kind, const SynthSpec& spec);

// Best accuracy achievable from post-bottleneck features alone. Detail and
// compositional answers need the within-block texture assignment, which the
// mixing destroys, so only a uniform guess over textures remains; semantic
// answers survive the mixing untouched.
double theoretical_floor(TaskKind kind, bool bottlenecked, const SynthSpec& spec);

// Recompute the ground-truth answer class from the image + query alone
// (independent of the generator's internal choices).
int recompute_answer(const QuerySample& s, const SynthSpec& spec);

// One-hot [shape; texture; color] features per patch, rows = patches.
template <class T>
Mat<T> patch_features(const SyntheticImage& img, const SynthSpec& spec) {
  Mat<T> f(static_cast<int>(img.patches.size()), spec.attr_dim());
  for (size_t i = 0; i < img.patches.size(); ++i) {
    const Patch& p = img.patches[i];
    f.at(static_cast<int>(i), p.shape) = T(1);
    f.at(static_cast<int>(i), spec.shapes + p.texture) = T(1);
    f.at(static_cast<int>(i), spec.shapes + spec.textures + p.color) = T(1);
  }
  return f;
}

// Length-prefixed little-endian record framing for sample files.
void write_record(std::ostream& out, const QuerySample& s);
bool read_record(std::istream& in, QuerySample& s);  // false on clean EOF

}  // namespace xlij
