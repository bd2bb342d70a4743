#include "pheno/rng.hpp"

#include <cmath>
#include <numbers>

namespace pheno {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;
}

std::uint64_t mix64(std::uint64_t x) noexcept {
  x += kGolden;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view bytes) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) noexcept {
  return mix64(a ^ mix64(b + 0x632BE59BD9B4E019ull));
}

Rng::Rng(std::uint64_t seed, std::string_view tag)
    : key_(hash_combine(mix64(seed), fnv1a(tag))) {}

Rng::Rng(std::uint64_t seed, std::string_view tag, std::uint64_t sub)
    : key_(hash_combine(hash_combine(mix64(seed), fnv1a(tag)), sub)) {}

Rng Rng::split(std::string_view tag) const { return Rng(hash_combine(key_, fnv1a(tag))); }

Rng Rng::split(std::uint64_t sub) const { return Rng(hash_combine(key_, sub)); }

std::uint64_t Rng::next_u64() noexcept {
  return mix64(key_ ^ mix64(counter_++ * kGolden));
}

double Rng::uniform() noexcept {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

std::uint64_t Rng::below(std::uint64_t n) noexcept {
  if (n <= 1) return 0;
  // rejection keeps the draw unbiased
  const std::uint64_t limit = (~std::uint64_t{0}) - (~std::uint64_t{0}) % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() noexcept {
  // Box-Muller, one variate per pair of uniforms.
  double u1 = uniform();
  const double u2 = uniform();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace pheno
