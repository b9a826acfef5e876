#pragma once

#include <cstdint>
#include <random>

namespace harmonize {

// Seeded 64-bit generator. Uniform variates are built from raw engine bits so
// streams are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Independent stream for a (seed, counter) pair, e.g. one per subject or
  // replicate, so parallel generation stays reproducible.
  static Rng stream(std::uint64_t seed, std::uint64_t counter) {
    return Rng(splitmix64(seed ^ splitmix64(counter + 0x632be59bd9b4e019ULL)));
  }

  // Uniform on [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform on (0, 1).
  double uniform_open() {
    double u;
    do {
      u = uniform();
    } while (u == 0.0);
    return u;
  }

  std::uint64_t next() { return engine_(); }

  static std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace harmonize
