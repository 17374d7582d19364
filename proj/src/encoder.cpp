#include "sbnn/encoder.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <string>

#include "sbnn/errors.hpp"
#include "sbnn/random.hpp"

namespace sbnn {

std::string_view to_string(RngKind kind) {
  switch (kind) {
    case RngKind::Lfsr8: return "lfsr8";
    case RngKind::Counter64: return "counter64";
    case RngKind::OsEntropy: return "os";
  }
  return "?";
}

RngKind parse_rng_kind(std::string_view name) {
  if (name == "lfsr8") return RngKind::Lfsr8;
  if (name == "counter64") return RngKind::Counter64;
  if (name == "os") return RngKind::OsEntropy;
  fail(ErrorCode::InvalidConfig, "unknown rng kind '" + std::string(name) + "'");
}

void StochasticConfig::validate(std::size_t depth) const {
  if (presentations < 1) {
    fail(ErrorCode::InvalidConfig, "presentation count must be >= 1");
  }
  if (accumulation_layer < 1 || static_cast<std::size_t>(accumulation_layer) > depth) {
    fail(ErrorCode::InvalidConfig, "accumulation layer " + std::to_string(accumulation_layer) +
                                       " outside [1, " + std::to_string(depth) + "]");
  }
}

Lfsr8Output lfsr8_next(Lfsr8State state) {
  if (state.value == 0) fail(ErrorCode::DegenerateLfsrState, "LFSR register is all zero");
  std::uint8_t s = state.value;
  std::uint8_t byte = 0;
  for (int i = 0; i < 8; ++i) {
    byte = static_cast<std::uint8_t>(byte | ((s & 1U) << i));
    s = lfsr8_step(s);
  }
  return {byte, Lfsr8State{s}};
}

namespace {

// The register walks one 255-state cycle; tabulating it lets a per-pixel
// stream jump straight to presentation t.
struct LfsrCycle {
  std::array<std::uint8_t, kLfsr8Period> out_bit{};   // LSB of the k-th state
  std::array<std::uint8_t, 256> position{};            // index of a state in the cycle

  constexpr LfsrCycle() {
    std::uint8_t s = 1;
    for (int k = 0; k < kLfsr8Period; ++k) {
      out_bit[k] = s & 1U;
      position[s] = static_cast<std::uint8_t>(k);
      s = lfsr8_step(s);
    }
  }

  constexpr std::uint8_t byte_at(std::size_t start, std::uint64_t presentation) const {
    std::size_t k = (start + (presentation % kLfsr8Period) * 8) % kLfsr8Period;
    std::uint8_t byte = 0;
    for (int i = 0; i < 8; ++i) {
      byte = static_cast<std::uint8_t>(byte | (out_bit[k] << i));
      k = k + 1 == kLfsr8Period ? 0 : k + 1;
    }
    return byte;
  }
};

constexpr LfsrCycle kLfsrCycle{};

// Nonzero initial register for pixel j's LFSR.
std::uint8_t lfsr_seed_state(std::uint64_t seed, std::size_t pixel) {
  return static_cast<std::uint8_t>(1 + derive_seed(seed, pixel) % kLfsr8Period);
}

std::uint64_t counter_block(std::uint64_t seed, std::size_t group, std::uint64_t presentation) {
  return mix64(derive_seed(seed, group) + mix64(presentation ^ 0xa0761d6478bd642fULL));
}

}  // namespace

PixelSampler PixelSampler::fork(std::uint64_t stream) const {
  return PixelSampler(kind_, derive_seed(seed_ ^ 0x5bd1e9955bd1e995ULL, stream));
}

std::uint8_t PixelSampler::draw(std::size_t pixel, std::uint64_t presentation) const {
  switch (kind_) {
    case RngKind::Lfsr8:
      return kLfsrCycle.byte_at(kLfsrCycle.position[lfsr_seed_state(seed_, pixel)], presentation);
    case RngKind::Counter64:
      return static_cast<std::uint8_t>(counter_block(seed_, pixel / 8, presentation) >>
                                       (8 * (pixel % 8)));
    case RngKind::OsEntropy: {
      std::random_device rd;
      return static_cast<std::uint8_t>(rd());
    }
  }
  return 0;
}

void PixelSampler::draws(std::uint64_t presentation, std::span<std::uint8_t> out) const {
  switch (kind_) {
    case RngKind::Lfsr8:
      for (std::size_t j = 0; j < out.size(); ++j) {
        out[j] = kLfsrCycle.byte_at(kLfsrCycle.position[lfsr_seed_state(seed_, j)], presentation);
      }
      break;
    case RngKind::Counter64:
      for (std::size_t g = 0; g * 8 < out.size(); ++g) {
        const std::uint64_t block = counter_block(seed_, g, presentation);
        const std::size_t end = std::min(out.size(), g * 8 + 8);
        for (std::size_t j = g * 8; j < end; ++j) {
          out[j] = static_cast<std::uint8_t>(block >> (8 * (j % 8)));
        }
      }
      break;
    case RngKind::OsEntropy: {
      std::random_device rd;
      for (std::size_t j = 0; j < out.size(); j += 4) {
        const std::uint32_t v = rd();
        for (std::size_t i = j; i < std::min(out.size(), j + 4); ++i) {
          out[i] = static_cast<std::uint8_t>(v >> (8 * (i - j)));
        }
      }
      break;
    }
  }
}

unsigned bernoulli_level(double p) noexcept {
  if (!(p > 0.0)) return 0;
  if (p >= 1.0) return 256;
  return static_cast<unsigned>(std::lround(p * 256.0));
}

std::vector<std::uint16_t> bernoulli_levels(std::span<const double> x) {
  std::vector<std::uint16_t> levels(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double p = x[j];
    if (std::isnan(p) || p < -kPixelTolerance || p > 1.0 + kPixelTolerance) {
      fail(ErrorCode::InvalidPixel,
           "pixel " + std::to_string(j) + " = " + std::to_string(p) + " outside [0,1]");
    }
    levels[j] = static_cast<std::uint16_t>(bernoulli_level(p));
  }
  return levels;
}

namespace {

BitVector threshold_draws(std::span<const std::uint16_t> levels,
                          std::span<const std::uint8_t> draws) {
  const std::size_t n = levels.size();
  std::vector<Word> words(words_for(n), 0);
  for (std::size_t j = 0; j < n; ++j) {
    if (draws[j] < levels[j]) words[j / kWordBits] |= Word{1} << (j % kWordBits);
  }
  return BitVector(n, std::move(words));
}

BitVector sample_with_levels(std::span<const std::uint16_t> levels, const PixelSampler& rng,
                             std::uint64_t presentation) {
  std::vector<std::uint8_t> draws(levels.size());
  rng.draws(presentation, draws);
  return threshold_draws(levels, draws);
}

}  // namespace

BitVector sample_binarized(std::span<const double> x, const PixelSampler& rng,
                           std::uint64_t presentation) {
  const auto levels = bernoulli_levels(x);
  return sample_with_levels(levels, rng, presentation);
}

std::vector<BitVector> sample_presentations(std::span<const double> x, int count,
                                            const PixelSampler& rng) {
  if (count < 1) fail(ErrorCode::InvalidConfig, "presentation count must be >= 1");
  const auto levels = bernoulli_levels(x);
  std::vector<BitVector> out(static_cast<std::size_t>(count));
#pragma omp parallel for schedule(static) if (count >= 16)
  for (int t = 0; t < count; ++t) {
    out[static_cast<std::size_t>(t)] = sample_with_levels(levels, rng, static_cast<std::uint64_t>(t));
  }
  return out;
}

namespace serial {

std::vector<BitVector> sample_presentations(std::span<const double> x, int count,
                                            const PixelSampler& rng) {
  if (count < 1) fail(ErrorCode::InvalidConfig, "presentation count must be >= 1");
  const auto levels = bernoulli_levels(x);
  std::vector<BitVector> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int t = 0; t < count; ++t) {
    out.push_back(sample_with_levels(levels, rng, static_cast<std::uint64_t>(t)));
  }
  return out;
}

}  // namespace serial

}  // namespace sbnn
