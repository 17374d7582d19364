#include "sbnn/bitcore.hpp"

#include <algorithm>
#include <bit>
#include <string>

#include "sbnn/errors.hpp"

namespace sbnn {

BitVector::BitVector(std::size_t length) : length_(length), words_(words_for(length), 0) {}

BitVector::BitVector(std::size_t length, std::vector<Word> words)
    : length_(length), words_(std::move(words)) {
  if (words_.size() != words_for(length)) {
    fail(ErrorCode::DimensionMismatch,
         "BitVector of " + std::to_string(length) + " bits needs " +
             std::to_string(words_for(length)) + " words, got " +
             std::to_string(words_.size()));
  }
  if (!words_.empty()) words_.back() &= tail_mask(length_);
}

std::size_t BitVector::count_ones() const noexcept {
  std::size_t n = 0;
  for (Word w : words_) n += static_cast<std::size_t>(std::popcount(w));
  return n;
}

BitVector BitVector::complement() const {
  std::vector<Word> flipped(words_.size());
  for (std::size_t i = 0; i < words_.size(); ++i) flipped[i] = ~words_[i];
  return BitVector(length_, std::move(flipped));
}

std::vector<int> BitVector::unpack_signs() const {
  std::vector<int> out(length_);
  for (std::size_t i = 0; i < length_; ++i) out[i] = sign(i);
  return out;
}

BitMatrix::BitMatrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), stride_(words_for(cols)), words_(rows * stride_, 0) {}

BitMatrix BitMatrix::from_rows(std::span<const BitVector> rows) {
  if (rows.empty()) return {};
  BitMatrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols_) {
      fail(ErrorCode::DimensionMismatch, "BitMatrix rows must share one length");
    }
    auto src = rows[r].words();
    std::copy(src.begin(), src.end(), m.row_words(r).begin());
  }
  return m;
}

BitVector BitMatrix::row(std::size_t r) const {
  auto src = row_words(r);
  return BitVector(cols_, std::vector<Word>(src.begin(), src.end()));
}

void BitMatrix::set(std::size_t r, std::size_t c, bool value) noexcept {
  Word& w = words_[r * stride_ + c / kWordBits];
  const Word m = Word{1} << (c % kWordBits);
  w = value ? (w | m) : (w & ~m);
}

long BitMatrix::row_sum(std::size_t r) const noexcept {
  long ones = 0;
  for (Word w : row_words(r)) ones += std::popcount(w);
  return 2 * ones - static_cast<long>(cols_);
}

BitVector pack_signs(std::span<const int> values) {
  BitVector out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] == 1) {
      out.set(i, true);
    } else if (values[i] != -1) {
      fail(ErrorCode::InvalidSign,
           "element " + std::to_string(i) + " is " + std::to_string(values[i]));
    }
  }
  return out;
}

std::size_t xnor_popcount_words(std::span<const Word> a, std::span<const Word> b,
                                std::size_t bits) noexcept {
  const std::size_t n = a.size();
  if (n == 0) return 0;
  std::size_t agree = 0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    agree += static_cast<std::size_t>(std::popcount(~(a[i] ^ b[i])));
  }
  // Both tails are zero, so their XNOR is all ones there: mask them off.
  agree += static_cast<std::size_t>(std::popcount(~(a[n - 1] ^ b[n - 1]) & tail_mask(bits)));
  return agree;
}

std::size_t xnor_popcount(const BitVector& a, const BitVector& b) {
  if (a.size() != b.size()) {
    fail(ErrorCode::DimensionMismatch, "xnor_popcount of lengths " + std::to_string(a.size()) +
                                           " and " + std::to_string(b.size()));
  }
  return xnor_popcount_words(a.words(), b.words(), a.size());
}

namespace {

void check_gemv(const BitMatrix& w, const BitVector& a) {
  if (w.cols() != a.size()) {
    fail(ErrorCode::DimensionMismatch, "binary_gemv: matrix has " + std::to_string(w.cols()) +
                                           " columns, vector has " + std::to_string(a.size()));
  }
}

}  // namespace

std::vector<std::int32_t> binary_gemv(const BitMatrix& w, const BitVector& a) {
  check_gemv(w, a);
  const auto rows = static_cast<std::ptrdiff_t>(w.rows());
  std::vector<std::int32_t> out(w.rows());
  const auto x = a.words();
  const std::size_t bits = a.size();
#pragma omp parallel for schedule(static) if (rows >= 64)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    out[r] = static_cast<std::int32_t>(xnor_popcount_words(w.row_words(r), x, bits));
  }
  return out;
}

namespace serial {

std::vector<std::int32_t> binary_gemv(const BitMatrix& w, const BitVector& a) {
  check_gemv(w, a);
  std::vector<std::int32_t> out(w.rows());
  for (std::size_t r = 0; r < w.rows(); ++r) {
    out[r] = static_cast<std::int32_t>(xnor_popcount_words(w.row_words(r), a.words(), a.size()));
  }
  return out;
}

}  // namespace serial

}  // namespace sbnn
