#include <gtest/gtest.h>

#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <vector>

#include "sbnn/encoder.hpp"
#include "sbnn/errors.hpp"
#include "sbnn/model.hpp"
#include "test_support.hpp"

using namespace sbnn;
using namespace sbnn::test;
using boost::multiprecision::cpp_int;
using boost::multiprecision::cpp_rational;

namespace {

cpp_rational exact(double v) {
  int e = 0;
  const double m = std::frexp(v, &e);
  cpp_int mant = static_cast<long long>(std::ldexp(m, 53));
  e -= 53;
  cpp_rational r(mant);
  if (e >= 0) {
    r *= cpp_rational(cpp_int(1) << e);
  } else {
    r /= cpp_rational(cpp_int(1) << -e);
  }
  return r;
}

// ±1 products of a packed row with a ±1 vector.
long signed_sum(const BitMatrix& w, std::size_t row, const std::vector<int>& a) {
  long s = 0;
  for (std::size_t j = 0; j < a.size(); ++j) s += w.sign(row, j) * a[j];
  return s;
}

std::vector<int> bits_to_signs(const BitVector& b) { return b.unpack_signs(); }

std::size_t argmax_ref(const std::vector<double>& s) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (s[i] > s[best]) best = i;
  }
  return best;
}

// Hidden layers k..L-2 and output of a model on ±1 activations.
std::size_t finish_reference(const BnnModel& m, std::size_t k, std::vector<int> a) {
  for (; k + 1 < m.depth(); ++k) {
    const auto& l = m.layer(k);
    std::vector<int> next(l.weights.rows());
    for (std::size_t i = 0; i < next.size(); ++i) {
      next[i] = static_cast<double>(signed_sum(l.weights, i, a)) >= l.mu[i] ? 1 : -1;
    }
    a = next;
  }
  const auto& out = m.layer(m.depth() - 1);
  std::vector<double> scores(out.weights.rows());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    scores[i] = (static_cast<double>(signed_sum(out.weights, i, a)) - out.mu[i]) / out.scale[i];
  }
  return argmax_ref(scores);
}

// Real-arithmetic conventional inference on inputs 2x - 1.
std::size_t conventional_reference(const BnnModel& m, const std::vector<double>& x) {
  const auto& l = m.layer(0);
  std::vector<double> z(l.weights.rows(), 0.0);
  for (std::size_t i = 0; i < z.size(); ++i) {
    for (std::size_t j = 0; j < x.size(); ++j) z[i] += l.weights.sign(i, j) * (2.0 * x[j] - 1.0);
  }
  if (m.depth() == 1) {
    std::vector<double> s(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) s[i] = (z[i] - l.mu[i]) / l.scale[i];
    return argmax_ref(s);
  }
  std::vector<int> a(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) a[i] = z[i] >= l.mu[i] ? 1 : -1;
  return finish_reference(m, 1, a);
}

// Accumulation at layer k (1-based) written out with integer sums.
std::size_t stochastic_reference(const BnnModel& m, const std::vector<BitVector>& xs, int k) {
  const auto acc = static_cast<std::size_t>(k - 1);
  const auto T = static_cast<long>(xs.size());
  std::vector<long> sums(m.layer(acc).weights.rows(), 0);
  for (const auto& x : xs) {
    std::vector<int> a = bits_to_signs(x);
    for (std::size_t layer = 0; layer < acc; ++layer) {
      const auto& l = m.layer(layer);
      std::vector<int> next(l.weights.rows());
      for (std::size_t i = 0; i < next.size(); ++i) {
        next[i] = static_cast<double>(signed_sum(l.weights, i, a)) >= l.mu[i] ? 1 : -1;
      }
      a = next;
    }
    for (std::size_t i = 0; i < sums.size(); ++i) sums[i] += signed_sum(m.layer(acc).weights, i, a);
  }
  const auto& l = m.layer(acc);
  if (acc + 1 == m.depth()) {
    std::vector<double> s(sums.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = (static_cast<double>(sums[i]) - static_cast<double>(T) * l.mu[i]) / l.scale[i];
    }
    return argmax_ref(s);
  }
  std::vector<int> a(sums.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = cpp_rational(sums[i]) >= cpp_rational(T) * exact(l.mu[i]) ? 1 : -1;
  }
  return finish_reference(m, acc + 1, a);
}

}  // namespace

TEST(ReachesThreshold, MatchesRationalOracle) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const double specials[] = {0.0,  0.5,   -0.5, 1.0 / 3.0, -7.0, 7.25, 1e-300, -1e-300,
                             1e-17, 3e15, -3e15, 0.1,       std::nextafter(2.0, 3.0)};
  for (int trial = 0; trial < 20000; ++trial) {
    double mu = trial % 4 == 0 ? specials[gen() % std::size(specials)] : unit(gen) * 100.0;
    const std::int64_t count = 1 + static_cast<std::int64_t>(gen() % 1000);
    std::int64_t sum = static_cast<std::int64_t>(std::llround(mu * count)) +
                       static_cast<std::int64_t>(gen() % 5) - 2;
    if (trial % 7 == 0) sum = static_cast<std::int64_t>(gen() % 2001) - 1000;
    const bool expected = cpp_rational(sum) >= cpp_rational(count) * exact(mu);
    ASSERT_EQ(reaches_threshold(sum, count, mu), expected)
        << "sum " << sum << " count " << count << " mu " << mu;
  }
  EXPECT_FALSE(reaches_threshold(0, 1, std::nan("")));
  EXPECT_TRUE(reaches_threshold(-5, 1, -std::numeric_limits<double>::infinity()));
  EXPECT_FALSE(reaches_threshold(5, 1, std::numeric_limits<double>::infinity()));
}

TEST(FoldThresholds, HandExamples) {
  const std::vector<double> sigma{1.0};
  EXPECT_EQ(fold_thresholds(std::vector<double>{0.0}, sigma, 10).theta[0], 5);
  EXPECT_EQ(fold_thresholds(std::vector<double>{-10.0}, sigma, 10).theta[0], 0);
  EXPECT_EQ(fold_thresholds(std::vector<double>{0.5}, sigma, 10).theta[0], 6);
  const auto high = fold_thresholds(std::vector<double>{11.0}, sigma, 10);
  EXPECT_EQ(high.theta[0], 10);
  EXPECT_EQ(high.clamped, 1u);
  EXPECT_EQ(fold_thresholds(std::vector<double>{-25.0}, sigma, 10).clamped, 1u);
}

TEST(FoldThresholds, SignEquivalence) {
  std::mt19937_64 gen(12);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + gen() % 800;
    const double mu = unit(gen) * (n + 5.0);
    const auto folded = fold_thresholds(std::vector<double>{mu}, std::vector<double>{0.7}, n);
    const auto theta = folded.theta[0];
    if (mu > static_cast<double>(n)) {  // unreachable: clamped to n
      EXPECT_EQ(theta, static_cast<std::int32_t>(n));
      EXPECT_EQ(folded.clamped, 1u);
      continue;
    }
    for (long p = 0; p <= static_cast<long>(n); ++p) {
      ASSERT_EQ(2.0 * p - static_cast<double>(n) - mu >= 0.0, p >= theta) << n << ' ' << mu;
    }
  }
}

TEST(FoldThresholds, DegenerateSigma) {
  for (double s : {0.0, -1.0, std::nan("")}) {
    try {
      fold_thresholds(std::vector<double>{0.0}, std::vector<double>{s}, 4);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::DegenerateBatchNorm);
    }
  }
}

TEST(LayerForwardBinary, ThresholdExtremes) {
  std::mt19937_64 gen(13);
  BinaryLayer l{random_bits(gen, 8, 20), std::vector<std::int32_t>(8, 0)};
  const BitVector a = pack_signs(random_signs(gen, 20));
  EXPECT_EQ(layer_forward_binary(l, a).count_ones(), 8u);
  l.thresholds.assign(8, 20);
  const BitVector out = layer_forward_binary(l, a);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(out.bit(i), l.weights.row(i) == a);
  l.weights.row_words(3)[0] = a.words()[0];
  EXPECT_TRUE(layer_forward_binary(l, a).bit(3));
}

TEST(LayerForwardBinary, MatchesSignedArithmetic) {
  std::mt19937_64 gen(14);
  for (int trial = 0; trial < 50; ++trial) {
    const BnnModel m = random_model(gen, {100, 40, 3});
    const auto a = random_signs(gen, 100);
    const BitVector out = layer_forward_binary(m.binary_layer(0), pack_signs(a));
    for (std::size_t i = 0; i < 40; ++i) {
      EXPECT_EQ(out.bit(i), static_cast<double>(signed_sum(m.layer(0).weights, i, a)) >= m.layer(0).mu[i]);
    }
  }
}

TEST(LayerForwardBinary, DimensionMismatch) {
  const BinaryLayer l{BitMatrix(2, 10), {0, 0}};
  EXPECT_THROW(layer_forward_binary(l, BitVector(11)), Error);
}

TEST(FirstLayerReal, HandExamples) {
  FirstLayerReal l;
  l.weights = BitMatrix::from_rows(std::vector<BitVector>{pack_signs(std::vector<int>{1, -1})});
  l.thresholds = {0.5};
  EXPECT_TRUE(first_layer_forward_real(l, std::vector<double>{0.9, 0.2}).bit(0));
  l.thresholds = {0.8};
  EXPECT_FALSE(first_layer_forward_real(l, std::vector<double>{0.9, 0.2}).bit(0));
  l.thresholds = {0.0};
  EXPECT_TRUE(first_layer_forward_real(l, std::vector<double>{0.0, 0.0}).bit(0));
}

TEST(FirstLayerReal, BruteForceDotProduct) {
  std::mt19937_64 gen(15);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  FirstLayerReal l;
  l.weights = random_bits(gen, 30, 50);
  for (int i = 0; i < 30; ++i) l.thresholds.push_back(unit(gen) * 5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto x = random_image(gen, 50);
    const BitVector out = first_layer_forward_real(l, x);
    for (std::size_t i = 0; i < 30; ++i) {
      double z = 0;
      for (std::size_t j = 0; j < 50; ++j) z += l.weights.sign(i, j) * x[j];
      EXPECT_EQ(out.bit(i), z >= l.thresholds[i]);
    }
  }
  // For x in {0,1}: sum w x = ((2 * agree - n) + sum w) / 2 with x read as ±1 bits.
  const auto s = random_signs(gen, 50);
  std::vector<double> x(50);
  for (std::size_t j = 0; j < 50; ++j) x[j] = s[j] > 0 ? 1.0 : 0.0;
  const BitVector b = pack_signs(s);
  for (std::size_t i = 0; i < 30; ++i) {
    const auto agree = static_cast<long>(xnor_popcount(l.weights.row(i), b));
    double direct = 0;
    for (std::size_t j = 0; j < 50; ++j) direct += l.weights.sign(i, j) * x[j];
    EXPECT_EQ(2.0 * direct, static_cast<double>(2 * agree - 50 + l.weights.row_sum(i)));
  }
}

TEST(FirstLayerReal, InvalidInputs) {
  FirstLayerReal l;
  l.weights = BitMatrix(1, 2);
  l.thresholds = {0.0};
  EXPECT_THROW(first_layer_forward_real(l, std::vector<double>{0.5}), Error);
  EXPECT_THROW(first_layer_forward_real(l, std::vector<double>{0.5, 1.5}), Error);
}

TEST(Argmax, LowestIndexWins) {
  EXPECT_EQ(argmax(std::vector<double>{1.0, 3.0, 3.0, 2.0}), 1u);
  EXPECT_EQ(argmax(std::vector<double>{0.0, 0.0, 0.0}), 0u);
}

TEST(BnnModel, ShapeValidation) {
  std::mt19937_64 gen(16);
  BnnModel::Layer a{random_bits(gen, 4, 6), std::vector<double>(4, 0.0), std::vector<double>(4, 1.0)};
  BnnModel::Layer b{random_bits(gen, 2, 5), std::vector<double>(2, 0.0), std::vector<double>(2, 1.0)};
  EXPECT_THROW(BnnModel(std::vector<BnnModel::Layer>{a, b}), Error);
  BnnModel::Layer wide{BitMatrix(1025, 4), std::vector<double>(1025, 0.0), std::vector<double>(1025, 1.0)};
  try {
    BnnModel m(std::vector<BnnModel::Layer>{wide});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LayerTooWide);
  }
  EXPECT_NO_THROW(BnnModel(std::vector<BnnModel::Layer>{wide}, {}, BnnModel::WidthCheck::Skip));
  const BnnModel ok(std::vector<BnnModel::Layer>{a});
  EXPECT_EQ(ok.layer_sizes(), (std::vector<std::size_t>{6, 4}));
}

TEST(InferConventional, MatchesReference) {
  std::mt19937_64 gen(17);
  for (const auto& sizes : {std::vector<std::size_t>{30, 5}, std::vector<std::size_t>{64, 32, 16, 10},
                            std::vector<std::size_t>{100, 50, 10}}) {
    const BnnModel m = random_model(gen, sizes);
    for (int trial = 0; trial < 50; ++trial) {
      const auto x = random_image(gen, sizes.front());
      EXPECT_EQ(infer_conventional(m, x), conventional_reference(m, x));
    }
  }
}

TEST(InferConventional, EqualScoresPickClassZero) {
  std::mt19937_64 gen(18);
  const BitMatrix hidden = random_bits(gen, 6, 10);
  BitMatrix out(4, 6);
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t c = 0; c < 6; ++c) out.set(r, c, hidden.bit(0, c));
  }
  const BnnModel m(std::vector<BnnModel::Layer>{
      {hidden, std::vector<double>(6, 0.0), std::vector<double>(6, 1.0)},
      {out, std::vector<double>(4, 0.5), std::vector<double>(4, 2.0)}});
  for (int trial = 0; trial < 10; ++trial) EXPECT_EQ(infer_conventional(m, random_image(gen, 10)), 0u);
}

TEST(InferStochastic, BinaryImageIsSeedAndTIndependent) {
  std::mt19937_64 gen(19);
  const BnnModel m = random_model(gen, {49, 20, 10});
  std::vector<double> x(49);
  for (auto& v : x) v = (gen() & 1) ? 1.0 : 0.0;
  std::vector<BitVector> single{BitVector(49)};
  for (std::size_t j = 0; j < 49; ++j) single[0].set(j, x[j] == 1.0);
  const auto expected = infer_presentations(m, single, 1);
  for (int t : {1, 2, 5, 17}) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      StochasticConfig cfg{t, RngKind::Counter64, seed, 1};
      EXPECT_EQ(infer_stochastic(m, x, cfg, PixelSampler(cfg)), expected);
    }
  }
}

TEST(InferStochastic, SinglePresentationIsPlainBinaryPass) {
  std::mt19937_64 gen(20);
  const BnnModel m = random_model(gen, {64, 32, 10});
  for (int trial = 0; trial < 30; ++trial) {
    const auto x = random_image(gen, 64);
    const PixelSampler rng(RngKind::Counter64, gen());
    const BitVector sample = sample_binarized(x, rng, 0);
    StochasticConfig cfg{1, RngKind::Counter64, rng.seed(), 1};
    EXPECT_EQ(infer_stochastic(m, x, cfg, rng),
              stochastic_reference(m, std::vector<BitVector>{sample}, 1));
  }
}

TEST(InferStochastic, AccumulationLayersMatchReference) {
  std::mt19937_64 gen(21);
  const BnnModel m = random_model(gen, {70, 24, 16, 5});
  for (int trial = 0; trial < 40; ++trial) {
    const auto x = random_image(gen, 70);
    const int t = 1 + static_cast<int>(gen() % 9);
    const auto pres = sample_presentations(x, t, PixelSampler(RngKind::Counter64, gen()));
    for (int k = 1; k <= 3; ++k) {
      EXPECT_EQ(infer_presentations(m, pres, k), stochastic_reference(m, pres, k)) << k;
    }
  }
}

TEST(InferStochastic, ExhaustiveEnumerationOfTwoUncertainPixels) {
  std::mt19937_64 gen(22);
  const BnnModel m = random_model(gen, {16, 8, 4});
  std::vector<double> x(16);
  for (auto& v : x) v = (gen() & 1) ? 1.0 : 0.0;
  const std::size_t u1 = 3, u2 = 11;
  x[u1] = 0.5;
  x[u2] = 0.5;
  const int T = 3;
  std::map<std::size_t, double> prob;
  for (unsigned outcome = 0; outcome < 64; ++outcome) {
    std::vector<BitVector> pres;
    for (int t = 0; t < T; ++t) {
      BitVector b(16);
      for (std::size_t j = 0; j < 16; ++j) b.set(j, x[j] == 1.0);
      b.set(u1, (outcome >> (2 * t)) & 1);
      b.set(u2, (outcome >> (2 * t + 1)) & 1);
      pres.push_back(b);
    }
    const auto cls = stochastic_reference(m, pres, 1);
    ASSERT_EQ(infer_presentations(m, pres, 1), cls);
    prob[cls] += 1.0 / 64;
  }
  const int n = 20000;
  std::map<std::size_t, double> freq;
  const PixelSampler root(RngKind::Counter64, 99);
  for (int i = 0; i < n; ++i) {
    StochasticConfig cfg{T, RngKind::Counter64, 0, 1};
    freq[infer_stochastic(m, x, cfg, root.fork(static_cast<std::uint64_t>(i)))] += 1.0 / n;
  }
  for (std::size_t c = 0; c < 4; ++c) {
    const double p = prob[c];
    EXPECT_NEAR(freq[c], p, 4 * std::sqrt(p * (1 - p) / n) + 1e-12) << "class " << c;
  }
}

TEST(InferStochastic, ExpectationConsistency) {
  // Mean first-layer ±1 pre-activation over presentations approaches the
  // real pre-activation on 2x - 1.
  std::mt19937_64 gen(23);
  const BitMatrix w = random_bits(gen, 32, 784);
  std::vector<double> x(784, 0.0);
  for (std::size_t r = 4; r < 24; ++r) {
    for (std::size_t c = 6; c < 22; ++c) x[r * 28 + c] = static_cast<double>(gen() % 256) / 255.0;
  }
  const int T = 10000;
  const auto pres = sample_presentations(x, T, PixelSampler(RngKind::Counter64, 5));
  double err2 = 0, ref2 = 0;
  for (std::size_t i = 0; i < w.rows(); ++i) {
    double real = 0;
    for (std::size_t j = 0; j < 784; ++j) real += w.sign(i, j) * (2 * x[j] - 1);
    double mean = 0;
    for (const auto& p : pres) mean += 2.0 * static_cast<double>(xnor_popcount(w.row(i), p)) - 784.0;
    mean /= T;
    err2 += (mean - real) * (mean - real);
    ref2 += real * real;
  }
  EXPECT_LT(std::sqrt(err2 / ref2), 0.02);
}

TEST(InferStochastic, InvalidAccumulationLayer) {
  std::mt19937_64 gen(24);
  const BnnModel m = random_model(gen, {10, 6, 3});
  StochasticConfig cfg{2, RngKind::Counter64, 1, 3};
  try {
    infer_stochastic(m, std::vector<double>(10, 0.5), cfg, PixelSampler(cfg));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidConfig);
  }
}

TEST(Predict, ParallelMatchesSerialAndIsDeterministic) {
  std::mt19937_64 gen(25);
  const BnnModel m = random_model(gen, {64, 32, 10});
  const Dataset d = random_dataset(gen, 300, 8, 10);
  EXPECT_EQ(predict_conventional(m, d), serial::predict_conventional(m, d));
  for (int k : {1, 2}) {
    StochasticConfig cfg{5, RngKind::Lfsr8, 77, k};
    const auto a = predict_stochastic(m, d, cfg);
    EXPECT_EQ(a, serial::predict_stochastic(m, d, cfg));
    EXPECT_EQ(a, predict_stochastic(m, d, cfg));
  }
}
