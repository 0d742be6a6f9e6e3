#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace tsforge {

// Deterministic random source. Every sampled quantity in the library (weight
// init, latent vectors, dropout masks, shuffles) flows through one of these so
// that a run is reproducible from a single seed and the stream can be
// checkpointed mid-run. Variates are derived from the raw mt19937_64 output
// directly: the standard distribution objects are implementation-defined and
// would tie reproducibility to one standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform_open01() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * kInv53;
  }

  // Uniform on the open interval (lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform_open01(); }

  // Standard normal via Box-Muller. Consumes two raw draws per call; the
  // second branch is discarded so the stream position is call-count only.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Index in [0, n). n must be positive.
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }

  // In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

  // The textual mt19937_64 state; the format is pinned by the standard, so a
  // saved stream restores bit-exactly.
  std::string save_state() const;
  void load_state(const std::string& text);

 private:
  static constexpr double kInv53 = 1.0 / 9007199254740992.0;  // 2^-53
  std::mt19937_64 engine_;
};

}  // namespace tsforge
