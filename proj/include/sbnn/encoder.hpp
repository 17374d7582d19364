#pragma once

// Stochastic binarization of real-valued inputs in [0,1].
//
// A pixel with intensity x becomes 1 iff an 8-bit uniform draw u satisfies
// u < round(256 x). The draw for pixel j at presentation t is a pure function
// of (rng kind, seed, j, t), so presentations can be generated in any order
// and in parallel.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "sbnn/bitcore.hpp"

namespace sbnn {

enum class RngKind { Lfsr8, Counter64, OsEntropy };

std::string_view to_string(RngKind kind);
// Accepts "lfsr8", "counter64", "os". Throws InvalidConfig otherwise.
RngKind parse_rng_kind(std::string_view name);

struct StochasticConfig {
  int presentations = 1;   // T
  RngKind rng = RngKind::Counter64;
  std::uint64_t seed = 0;
  int accumulation_layer = 1;  // 1-based; consumed by the model

  // Throws InvalidConfig unless T >= 1 and 1 <= accumulation_layer <= depth.
  void validate(std::size_t depth) const;
};

// 8-bit Fibonacci LFSR, feedback polynomial x^8 + x^6 + x^5 + x^4 + 1.
// Shifts right; the emitted bit is the register's LSB before each shift.
struct Lfsr8State {
  std::uint8_t value = 1;
  friend bool operator==(Lfsr8State, Lfsr8State) = default;
};

struct Lfsr8Output {
  std::uint8_t byte;  // first emitted bit in bit 0
  Lfsr8State next;
};

inline constexpr int kLfsr8Period = 255;

// One register advance. Precondition: state != 0.
constexpr std::uint8_t lfsr8_step(std::uint8_t s) noexcept {
  const unsigned fb = (s ^ (s >> 2) ^ (s >> 3) ^ (s >> 4)) & 1U;
  return static_cast<std::uint8_t>((s >> 1) | (fb << 7));
}

// Eight register advances, returning the eight emitted bits.
// Throws DegenerateLfsrState for the all-zero register.
Lfsr8Output lfsr8_next(Lfsr8State state);

// Probabilities within this distance outside [0,1] are clamped.
inline constexpr double kPixelTolerance = 1e-6;

// round(256 * p) for p in [0,1]; the pixel fires iff draw < level.
unsigned bernoulli_level(double p) noexcept;

class PixelSampler {
 public:
  PixelSampler(RngKind kind, std::uint64_t seed) : kind_(kind), seed_(seed) {}
  explicit PixelSampler(const StochasticConfig& cfg) : PixelSampler(cfg.rng, cfg.seed) {}

  RngKind kind() const noexcept { return kind_; }
  std::uint64_t seed() const noexcept { return seed_; }

  // Independent sampler for a sub-stream (one per image, epoch, ...).
  PixelSampler fork(std::uint64_t stream) const;

  // 8-bit draw for (pixel, presentation). Not reproducible for OsEntropy.
  std::uint8_t draw(std::size_t pixel, std::uint64_t presentation) const;

  // Draws for pixels [0, count) at one presentation.
  void draws(std::uint64_t presentation, std::span<std::uint8_t> out) const;

 private:
  RngKind kind_;
  std::uint64_t seed_;
};

// Per-pixel Bernoulli levels. Entries within kPixelTolerance of [0,1] are
// clamped; NaN or anything further out throws InvalidPixel.
std::vector<std::uint16_t> bernoulli_levels(std::span<const double> x);

BitVector sample_binarized(std::span<const double> x, const PixelSampler& rng,
                           std::uint64_t presentation = 0);

// Presentations 0..count-1, generated in parallel over presentations.
std::vector<BitVector> sample_presentations(std::span<const double> x, int count,
                                            const PixelSampler& rng);

namespace serial {
std::vector<BitVector> sample_presentations(std::span<const double> x, int count,
                                            const PixelSampler& rng);
}  // namespace serial

}  // namespace sbnn
