#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <string_view>

namespace ivrobust {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

/// FNV-1a, used to turn purpose tags into stream keys.
constexpr std::uint64_t tag_hash(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Counter-based random stream: the n-th output is a pure function of
/// (key, n), so substreams keyed by (seed, purpose, index) can be consumed in
/// any order or on any thread and still reproduce bit-for-bit.
///
/// Satisfies UniformRandomBitGenerator. Normal variates use Box-Muller rather
/// than std::normal_distribution so the sequence does not depend on the
/// standard library in use.
class CounterStream {
 public:
  using result_type = std::uint64_t;

  explicit CounterStream(std::uint64_t key = 0) noexcept : key_(mix64(key ^ 0x9e3779b97f4a7c15ULL)) {}

  /// Substream derived from a base seed and a sequence of 64-bit labels.
  static CounterStream derive(std::uint64_t seed, std::initializer_list<std::uint64_t> labels) noexcept {
    std::uint64_t k = mix64(seed + 0x632be59bd9b4e019ULL);
    for (std::uint64_t l : labels) k = mix64(k ^ mix64(l + 0x9e3779b97f4a7c15ULL));
    return CounterStream(k);
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept { return mix64(key_ + (counter_++) * 0x9e3779b97f4a7c15ULL); }

  /// Uniform on the open interval (0, 1) with 53 bits of resolution.
  double uniform() noexcept { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace ivrobust
