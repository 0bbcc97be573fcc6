#pragma once

#include <stdexcept>
#include <string>

namespace xlij {

// Error taxonomy. Every failure the library raises carries one of these
// codes so callers (and the CLI exit-code mapping) can tell them apart.
enum class errc {
  config,             // bad dimensions, invalid plan, missing adapter, bad flag
  numeric,            // non-finite values, training divergence
  leakage,            // train/eval seed ranges overlap
  empty_supervision,  // loss requested with an all-zero answer mask
  empty_trace,        // gate export with no recorded entries
  determinism,        // loss function not reproducible at the same point
  ckpt_magic,         // checkpoint file does not start with the magic bytes
  ckpt_version,       // checkpoint format version not supported
  ckpt_truncated,     // checkpoint payload ends early
  io,                 // other file-system failures
};

class error : public std::runtime_error {
 public:
  error(errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& msg) { throw error(code, msg); }

// Process exit codes used by the CLI. Success is 0; config-class problems,
// numerical failures and seed-range leakage each get a distinct code.
inline int exit_code(errc code) {
  switch (code) {
    case errc::numeric: return 3;
    case errc::leakage: return 4;
    case errc::ckpt_magic:
    case errc::ckpt_version:
    case errc::ckpt_truncated:
    case errc::io: return 5;
    default: return 2;
  }
}

}  // namespace xlij
