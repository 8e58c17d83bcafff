#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace boxmask {

/// A file or document violated a format or content contract.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Configuration or command-line parameters are invalid.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Deterministic random source. All sampling helpers are implemented on top
/// of the raw mt19937_64 stream so that sequences do not depend on the
/// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1).
  double next_double() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  /// Uniform index in [0, n); n must be positive.
  std::size_t next_index(std::size_t n) {
    if (n == 0) throw std::invalid_argument("Rng::next_index: empty range");
    return static_cast<std::size_t>(
        (static_cast<unsigned __int128>(engine_()) * n) >> 64);
  }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(next_index(static_cast<std::size_t>(hi - lo + 1)));
  }

  bool coin(double p = 0.5) { return next_double() < p; }

 private:
  std::mt19937_64 engine_;
};

/// splitmix64 finalizer; used to derive well-separated child seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// FNV-1a; stable id hashing for per-record seed derivation.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace boxmask
