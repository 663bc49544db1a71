#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace iprompt {

// Seeded generator with hand-mapped distributions so that identical seeds
// give identical streams regardless of the standard library's
// distribution implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // [0, 1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // inclusive bounds, rejection-free modulo is fine at these ranges
  int uniform_int(int lo, int hi);

  double normal();

  // Derives an independent stream seed from a base seed and a stream tag.
  static uint64_t derive(uint64_t seed, uint64_t stream);
  static uint64_t hash_str(std::string_view s);

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace iprompt
