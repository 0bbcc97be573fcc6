#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "xlij/config.hpp"
#include "xlij/params.hpp"

namespace xlij {

inline constexpr char kCheckpointMagic[4] = {'X', 'L', 'I', 'J'};
inline constexpr uint32_t kCheckpointVersion = 1;

enum class Dtype : uint8_t { f32 = 0, f64 = 1 };

struct TensorBlob {
  std::string name;
  Dtype dtype = Dtype::f64;
  uint32_t rows = 0, cols = 0;
  std::vector<unsigned char> payload;  // little-endian scalar bytes
};

// On-disk checkpoint image: magic, version, config snapshot, training step,
// rng state, then named tensors.
struct RawCheckpoint {
  std::string config_text;
  uint64_t step = 0;
  std::string rng_state;
  std::vector<TensorBlob> tensors;

  void write_file(const std::string& path) const;
  static RawCheckpoint read_file(const std::string& path);
};

template <class T>
constexpr Dtype dtype_of() {
  return sizeof(T) == 4 ? Dtype::f32 : Dtype::f64;
}

template <class T>
RawCheckpoint make_checkpoint(const ParamStore<T>& store, const RunConfig& cfg, uint64_t step,
                              const std::string& rng_state) {
  static_assert(sizeof(float) == 4 && sizeof(double) == 8);
  RawCheckpoint ck;
  ck.config_text = cfg.to_text();
  ck.step = step;
  ck.rng_state = rng_state;
  for (const auto& p : store) {
    TensorBlob b;
    b.name = p.name;
    b.dtype = dtype_of<T>();
    b.rows = static_cast<uint32_t>(p.value.rows);
    b.cols = static_cast<uint32_t>(p.value.cols);
    b.payload.resize(p.value.size() * sizeof(T));
    std::memcpy(b.payload.data(), p.value.data.data(), b.payload.size());
    ck.tensors.push_back(std::move(b));
  }
  return ck;
}

struct LoadReport {
  bool narrowed = false;  // a float64 checkpoint was squeezed into a float32 run
  bool widened = false;
};

// Fills `store` from the checkpoint by tensor name. The tensor set must
// match the store exactly; loading the same scalar type reproduces values
// bit for bit, loading a wider checkpoint into a narrower run narrows with
// a report flag so callers can warn.
template <class T>
LoadReport apply_checkpoint(const RawCheckpoint& ck, ParamStore<T>& store) {
  LoadReport rep;
  if (ck.tensors.size() != store.count())
    fail(errc::config, "checkpoint holds " + std::to_string(ck.tensors.size()) +
                           " tensors, model expects " + std::to_string(store.count()));
  for (const TensorBlob& b : ck.tensors) {
    Parameter<T>* p = store.find(b.name);
    if (!p) fail(errc::config, "checkpoint tensor '" + b.name + "' not in model");
    if (static_cast<int>(b.rows) != p->value.rows || static_cast<int>(b.cols) != p->value.cols)
      fail(errc::config, "checkpoint tensor '" + b.name + "' shape mismatch");
    const size_t n = p->value.size();
    if (b.dtype == dtype_of<T>()) {
      if (b.payload.size() != n * sizeof(T))
        fail(errc::ckpt_truncated, "checkpoint tensor '" + b.name + "' payload size");
      std::memcpy(p->value.data.data(), b.payload.data(), b.payload.size());
    } else if (b.dtype == Dtype::f64) {
      if (b.payload.size() != n * sizeof(double))
        fail(errc::ckpt_truncated, "checkpoint tensor '" + b.name + "' payload size");
      const double* src = reinterpret_cast<const double*>(b.payload.data());
      for (size_t i = 0; i < n; ++i) p->value.data[i] = static_cast<T>(src[i]);
      rep.narrowed = true;
    } else {
      if (b.payload.size() != n * sizeof(float))
        fail(errc::ckpt_truncated, "checkpoint tensor '" + b.name + "' payload size");
      const float* src = reinterpret_cast<const float*>(b.payload.data());
      for (size_t i = 0; i < n; ++i) p->value.data[i] = static_cast<T>(src[i]);
      rep.widened = true;
    }
  }
  return rep;
}

}  // namespace xlij
