#pragma once

// Packed ±1 vectors and matrices plus the XNOR/popcount kernel that stands in
// for multiply-accumulate in every binarized layer.
//
// Encoding: bit 1 is +1, bit 0 is -1. Bits are stored least-significant-bit
// first in 64-bit words; bits past the logical length are always zero.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace sbnn {

using Word = std::uint64_t;
inline constexpr std::size_t kWordBits = 64;

constexpr std::size_t words_for(std::size_t bits) noexcept {
  return (bits + kWordBits - 1) / kWordBits;
}

// Mask selecting the valid bits of the final word of a `bits`-long vector.
constexpr Word tail_mask(std::size_t bits) noexcept {
  const std::size_t rem = bits % kWordBits;
  return rem == 0 ? ~Word{0} : (Word{1} << rem) - 1;
}

class BitVector {
 public:
  BitVector() = default;
  // All bits zero, i.e. every element -1.
  explicit BitVector(std::size_t length);
  // Takes ownership of packed words; tail bits are cleared.
  BitVector(std::size_t length, std::vector<Word> words);

  std::size_t size() const noexcept { return length_; }
  bool empty() const noexcept { return length_ == 0; }
  std::span<const Word> words() const noexcept { return words_; }

  bool bit(std::size_t i) const noexcept {
    return (words_[i / kWordBits] >> (i % kWordBits)) & 1U;
  }
  void set(std::size_t i, bool value) noexcept {
    const Word m = Word{1} << (i % kWordBits);
    if (value) {
      words_[i / kWordBits] |= m;
    } else {
      words_[i / kWordBits] &= ~m;
    }
  }
  int sign(std::size_t i) const noexcept { return bit(i) ? 1 : -1; }

  std::size_t count_ones() const noexcept;
  BitVector complement() const;
  std::vector<int> unpack_signs() const;

  friend bool operator==(const BitVector&, const BitVector&) = default;

 private:
  std::size_t length_ = 0;
  std::vector<Word> words_;
};

// Row-major packed matrix; one row per output neuron, every row padded to a
// whole number of words.
class BitMatrix {
 public:
  BitMatrix() = default;
  BitMatrix(std::size_t rows, std::size_t cols);

  static BitMatrix from_rows(std::span<const BitVector> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t words_per_row() const noexcept { return stride_; }

  std::span<const Word> row_words(std::size_t r) const noexcept {
    return {words_.data() + r * stride_, stride_};
  }
  std::span<Word> row_words(std::size_t r) noexcept {
    return {words_.data() + r * stride_, stride_};
  }
  std::span<const Word> data() const noexcept { return words_; }

  BitVector row(std::size_t r) const;
  bool bit(std::size_t r, std::size_t c) const noexcept {
    return (words_[r * stride_ + c / kWordBits] >> (c % kWordBits)) & 1U;
  }
  void set(std::size_t r, std::size_t c, bool value) noexcept;
  int sign(std::size_t r, std::size_t c) const noexcept { return bit(r, c) ? 1 : -1; }

  // Number of +1 entries minus number of -1 entries in row r.
  long row_sum(std::size_t r) const noexcept;

  friend bool operator==(const BitMatrix&, const BitMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::size_t stride_ = 0;
  std::vector<Word> words_;
};

// Bit i = 1 iff values[i] == +1. Throws InvalidSign for anything not ±1.
BitVector pack_signs(std::span<const int> values);

// Number of agreeing positions of two packed words spans of `bits` logical
// bits. No length checks; the final word is masked.
std::size_t xnor_popcount_words(std::span<const Word> a, std::span<const Word> b,
                                std::size_t bits) noexcept;

// Number of positions where a and b agree. 2*result - n is the ±1 dot product.
std::size_t xnor_popcount(const BitVector& a, const BitVector& b);

// out[i] = xnor_popcount(W.row(i), a). Rows are distributed over OpenMP threads.
std::vector<std::int32_t> binary_gemv(const BitMatrix& w, const BitVector& a);

namespace serial {
// Single-threaded reference for binary_gemv, kept for tests and benchmarks.
std::vector<std::int32_t> binary_gemv(const BitMatrix& w, const BitVector& a);
}  // namespace serial

}  // namespace sbnn
