#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace pheno {

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// FNV-1a over bytes; used for purpose tags and fingerprints.
std::uint64_t fnv1a(std::string_view bytes) noexcept;

std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) noexcept;

/// Counter-based generator. A stream is identified by (seed, purpose tag);
/// the i-th draw is a pure function of (seed, tag, i), so streams can be
/// split and replayed independently of scheduling.
class Rng {
 public:
  Rng(std::uint64_t seed, std::string_view tag);
  Rng(std::uint64_t seed, std::string_view tag, std::uint64_t sub);

  /// Child stream keyed by an additional tag.
  Rng split(std::string_view tag) const;
  Rng split(std::uint64_t sub) const;

  std::uint64_t next_u64() noexcept;
  double uniform() noexcept;  // [0, 1)
  double uniform(double lo, double hi) noexcept;
  std::uint64_t below(std::uint64_t n) noexcept;  // [0, n)
  double normal() noexcept;

  template <typename T>
  void shuffle(std::vector<T>& v) noexcept {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t cursor() const noexcept { return counter_; }
  void set_cursor(std::uint64_t c) noexcept { counter_ = c; }

 private:
  explicit Rng(std::uint64_t key) : key_(key) {}
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace pheno
