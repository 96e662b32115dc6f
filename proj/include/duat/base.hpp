#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace duat {

// Contract violations on tensor shapes / channel bounds.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// NaN/Inf detected in an op result, or a numerical verification failed.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed external input: files, manifests, config keys.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Precision { f64, f32 };

// Global engine switches.
//
// f64 is the default and what every gradient check runs under; f32 emulates
// single precision by rounding each op result through float (training mode).
// strict_finite_checks scans every op output for NaN/Inf; when off, outputs
// are sampled and only scalars are always scanned.
struct Engine {
  static Precision precision;
  static bool strict_finite_checks;
};

// Rounds v through float when the engine runs in f32 mode.
inline double apply_precision(double v) {
  return Engine::precision == Precision::f32 ? static_cast<double>(static_cast<float>(v)) : v;
}

// Deterministic RNG. mt19937_64 supplies the bit stream; the value mappings
// are hand-rolled so streams are byte-reproducible across standard library
// implementations (std::uniform_*_distribution is implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller.
  double normal();

  // Inclusive [lo, hi].
  int uniform_int(int lo, int hi);

  bool bernoulli(double p) { return uniform() < p; }

  // Independent per-item stream derived from (seed, stream) via splitmix64.
  static Rng for_stream(std::uint64_t seed, std::uint64_t stream);

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace duat
