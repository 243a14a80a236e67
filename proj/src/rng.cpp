#include "stv/rng.hpp"

#include <cmath>
#include <numbers>

#include "stv/error.hpp"

namespace stv {
namespace {

constexpr std::uint32_t kMulA = 0xD2511F53u;
constexpr std::uint32_t kMulB = 0xCD9E8D57u;
constexpr std::uint32_t kWeylA = 0x9E3779B9u;
constexpr std::uint32_t kWeylB = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

inline double to_unit_open_closed(std::uint64_t bits) {
  // (k + 1) / 2^53 for k in [0, 2^53): never 0, reaches 1.
  return static_cast<double>((bits >> 11) + 1) * 0x1.0p-53;
}

}  // namespace

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key) noexcept {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMulA, ctr[0], hi0, lo0);
    mulhilo(kMulB, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeylA;
    key[1] += kWeylB;
  }
  return ctr;
}

std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::array<std::uint32_t, 4> RngStream::next_block() noexcept {
  const std::array<std::uint32_t, 4> ctr{static_cast<std::uint32_t>(counter_),
                                         static_cast<std::uint32_t>(counter_ >> 32), 0u, 0u};
  const std::array<std::uint32_t, 2> key{static_cast<std::uint32_t>(seed_),
                                         static_cast<std::uint32_t>(seed_ >> 32)};
  ++counter_;
  return philox4x32(ctr, key);
}

std::uint64_t RngStream::next_u64() noexcept {
  const auto b = next_block();
  return (static_cast<std::uint64_t>(b[1]) << 32) | b[0];
}

double RngStream::next_uniform() noexcept { return to_unit_open_closed(next_u64()); }

std::uint64_t RngStream::next_below(std::uint64_t n) {
  if (n == 0) throw DomainError("next_below: empty range");
  // Rejection on the top multiple of n keeps the draw exactly uniform.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  for (;;) {
    const std::uint64_t r = next_u64();
    if (r < limit) return r % n;
  }
}

void RngStream::fill_gaussian(std::span<double> out) noexcept {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  std::size_t i = 0;
  while (i < out.size()) {
    const auto b = next_block();
    const double u1 = to_unit_open_closed((static_cast<std::uint64_t>(b[1]) << 32) | b[0]);
    const double u2 = to_unit_open_closed((static_cast<std::uint64_t>(b[3]) << 32) | b[2]);
    const double r = std::sqrt(-2.0 * std::log(u1));
    out[i++] = r * std::cos(two_pi * u2);
    if (i < out.size()) out[i++] = r * std::sin(two_pi * u2);
  }
}

RngStream RngStream::split(std::uint64_t key) const noexcept {
  return RngStream(mix64(seed_ ^ mix64(key ^ 0x5DEECE66Dull)), 0);
}

}  // namespace stv
