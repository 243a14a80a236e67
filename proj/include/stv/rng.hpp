#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace stv {

// Counter-based generator (Philox4x32-10). A stream is the pair
// (seed, counter); every draw is a pure function of that pair, so two
// streams with equal state produce identical output on any platform.
// Streams are plain values: copy one to fork, split() to derive an
// independent stream keyed by an integer.
class RngStream {
 public:
  constexpr explicit RngStream(std::uint64_t seed = 0, std::uint64_t counter = 0) noexcept
      : seed_(seed), counter_(counter) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

  // Raw 128-bit block for the current counter; advances the counter by one.
  std::array<std::uint32_t, 4> next_block() noexcept;

  std::uint64_t next_u64() noexcept;

  // Uniform on (0, 1], 53-bit resolution.
  double next_uniform() noexcept;

  // Unbiased uniform integer in [0, n). n must be positive.
  std::uint64_t next_below(std::uint64_t n);

  // Standard normal draws via Box-Muller; one block yields two values.
  // Consumes ceil(out.size() / 2) counters.
  void fill_gaussian(std::span<double> out) noexcept;

  // Independent stream whose seed is a hash of (seed, key); counter 0.
  RngStream split(std::uint64_t key) const noexcept;

  friend bool operator==(const RngStream&, const RngStream&) = default;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_;
};

// Philox4x32-10 bijection, exposed for tests.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key) noexcept;

// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

}  // namespace stv
