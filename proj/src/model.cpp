#include "sbnn/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sbnn/errors.hpp"

namespace sbnn {

std::string_view to_string(InputMode mode) {
  switch (mode) {
    case InputMode::Grayscale: return "grayscale";
    case InputMode::Stochastic: return "stochastic";
    case InputMode::BlackWhite: return "bw";
  }
  return "?";
}

InputMode parse_input_mode(std::string_view name) {
  if (name == "grayscale") return InputMode::Grayscale;
  if (name == "stochastic") return InputMode::Stochastic;
  if (name == "bw") return InputMode::BlackWhite;
  fail(ErrorCode::InvalidConfig, "unknown input mode '" + std::string(name) + "'");
}

bool reaches_threshold(std::int64_t sum, std::int64_t count, double mu) noexcept {
  // sum >= count * mu, decided on integers: split mu = q + f with q integral
  // and f in [0,1), then compare sum - count*q against count*f.
  constexpr double kHuge = 0x1.0p53;
  if (std::isnan(mu)) return false;
  if (mu >= kHuge) return false;
  if (mu <= -kHuge) return true;
  const double q = std::floor(mu);
  const double f = mu - q;
  const __int128 m = static_cast<__int128>(sum) -
                     static_cast<__int128>(count) * static_cast<std::int64_t>(q);
  if (f == 0.0) return m >= 0;
  if (m <= 0) return false;
  if (m >= count) return true;
  int ex = 0;
  const double fr = std::frexp(f, &ex);  // f = fr * 2^ex, fr in [0.5, 1)
  const auto mant = static_cast<std::int64_t>(std::ldexp(fr, 53));
  const int shift = 53 - ex;
  if (shift > 90) return true;  // count * f < 2^-37 * count < 1 <= m
  return (m << shift) >= static_cast<__int128>(count) * mant;
}

FoldedThresholds fold_thresholds(std::span<const double> mu, std::span<const double> sigma,
                                 std::size_t fan_in) {
  if (mu.size() != sigma.size()) {
    fail(ErrorCode::DimensionMismatch, "fold_thresholds: mu and sigma lengths differ");
  }
  FoldedThresholds out;
  out.theta.resize(mu.size());
  const auto n = static_cast<std::int64_t>(fan_in);
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (!(sigma[i] > 0.0) || std::isnan(mu[i])) {
      fail(ErrorCode::DegenerateBatchNorm,
           "neuron " + std::to_string(i) + ": sigma " + std::to_string(sigma[i]) + ", mu " +
               std::to_string(mu[i]));
    }
    const auto fires = [&](std::int64_t p) { return reaches_threshold(2 * p - n, 1, mu[i]); };
    if (fires(0)) {
      out.theta[i] = 0;
      if (mu[i] < -static_cast<double>(n)) ++out.clamped;
      continue;
    }
    if (!fires(n)) {
      out.theta[i] = static_cast<std::int32_t>(n);
      ++out.clamped;
      continue;
    }
    // Least p in (0, n] that fires; start from the real-valued estimate.
    double guess = std::ceil((mu[i] + static_cast<double>(n)) / 2.0);
    auto p = static_cast<std::int64_t>(std::clamp(guess, 1.0, static_cast<double>(n)));
    while (p > 1 && fires(p - 1)) --p;
    while (!fires(p)) ++p;
    out.theta[i] = static_cast<std::int32_t>(p);
  }
  return out;
}

BitVector layer_forward_binary(const BinaryLayer& layer, const BitVector& a) {
  const auto pop = serial::binary_gemv(layer.weights, a);
  BitVector out(layer.weights.rows());
  for (std::size_t i = 0; i < pop.size(); ++i) {
    if (pop[i] >= layer.thresholds[i]) out.set(i, true);
  }
  return out;
}

namespace {

void check_pixels(std::span<const double> x, std::size_t expected) {
  if (x.size() != expected) {
    fail(ErrorCode::DimensionMismatch, "input has " + std::to_string(x.size()) +
                                           " pixels, layer expects " + std::to_string(expected));
  }
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (std::isnan(x[j]) || x[j] < -kPixelTolerance || x[j] > 1.0 + kPixelTolerance) {
      fail(ErrorCode::InvalidPixel, "pixel " + std::to_string(j) + " outside [0,1]");
    }
  }
}

std::vector<double> dense_signs(const BitMatrix& w) {
  std::vector<double> d(w.rows() * w.cols());
  for (std::size_t i = 0; i < w.rows(); ++i) {
    for (std::size_t j = 0; j < w.cols(); ++j) d[i * w.cols() + j] = w.sign(i, j);
  }
  return d;
}

// sum_j sign(W_ij) x_j with four interleaved partial sums combined in a
// fixed order, so results do not depend on the thread count.
std::vector<double> signed_dot(const FirstLayerReal& layer, std::span<const double> x) {
  const BitMatrix& w = layer.weights;
  const std::size_t cols = w.cols();
  std::vector<double> cached;
  const std::vector<double>* signs = &layer.dense_signs;
  if (signs->size() != w.rows() * cols) {
    cached = dense_signs(w);
    signs = &cached;
  }
  std::vector<double> z(w.rows(), 0.0);
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const double* s = signs->data() + i * cols;
    double acc[4] = {0.0, 0.0, 0.0, 0.0};
    std::size_t j = 0;
    for (; j + 4 <= cols; j += 4) {
      acc[0] += s[j] * x[j];
      acc[1] += s[j + 1] * x[j + 1];
      acc[2] += s[j + 2] * x[j + 2];
      acc[3] += s[j + 3] * x[j + 3];
    }
    for (; j < cols; ++j) acc[j % 4] += s[j] * x[j];
    z[i] = (acc[0] + acc[1]) + (acc[2] + acc[3]);
  }
  return z;
}

}  // namespace

BitVector first_layer_forward_real(const FirstLayerReal& layer, std::span<const double> x) {
  check_pixels(x, layer.weights.cols());
  const auto z = signed_dot(layer, x);
  BitVector out(layer.weights.rows());
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (z[i] >= layer.thresholds[i]) out.set(i, true);
  }
  return out;
}

std::size_t argmax(std::span<const double> scores) noexcept {
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

BnnModel::BnnModel(std::vector<Layer> layers, ModelMetadata meta, WidthCheck width_check)
    : layers_(std::move(layers)), meta_(meta) {
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const Layer& l = layers_[k];
    const std::size_t rows = l.weights.rows();
    if (rows == 0) fail(ErrorCode::DimensionMismatch, "layer " + std::to_string(k) + " is empty");
    if (l.mu.size() != rows || l.scale.size() != rows) {
      fail(ErrorCode::DimensionMismatch,
           "layer " + std::to_string(k) + ": threshold vectors do not match row count");
    }
    if (k > 0 && l.weights.cols() != layers_[k - 1].weights.rows()) {
      fail(ErrorCode::DimensionMismatch, "layer " + std::to_string(k) + " expects " +
                                             std::to_string(l.weights.cols()) +
                                             " inputs, previous layer has " +
                                             std::to_string(layers_[k - 1].weights.rows()));
    }
    if (width_check == WidthCheck::Enforce && rows > kMaxLayerWidth) {
      fail(ErrorCode::LayerTooWide,
           "layer " + std::to_string(k) + " has " + std::to_string(rows) + " neurons");
    }
    auto folded = fold_thresholds(l.mu, l.scale, l.weights.cols());
    binary_.push_back(BinaryLayer{l.weights, std::move(folded.theta)});
  }
  if (!layers_.empty()) {
    const Layer& first = layers_.front();
    first_real_.weights = first.weights;
    first_real_.dense_signs = dense_signs(first.weights);
    first_real_.thresholds.resize(first.mu.size());
    // sum_j w_j (2x_j - 1) >= mu  <=>  sum_j w_j x_j >= (mu + sum_j w_j) / 2
    for (std::size_t i = 0; i < first.mu.size(); ++i) {
      first_real_.thresholds[i] =
          (first.mu[i] + static_cast<double>(first.weights.row_sum(i))) / 2.0;
    }
  }
}

std::size_t BnnModel::input_size() const noexcept {
  return layers_.empty() ? 0 : layers_.front().weights.cols();
}

std::size_t BnnModel::output_size() const noexcept {
  return layers_.empty() ? 0 : layers_.back().weights.rows();
}

std::vector<std::size_t> BnnModel::layer_sizes() const {
  std::vector<std::size_t> sizes;
  if (layers_.empty()) return sizes;
  sizes.push_back(input_size());
  for (const auto& l : layers_) sizes.push_back(l.weights.rows());
  return sizes;
}

std::vector<double> BnnModel::output_scores(std::span<const std::int64_t> sums,
                                            std::int64_t count) const {
  const Layer& out = layers_.back();
  std::vector<double> scores(sums.size());
  for (std::size_t i = 0; i < sums.size(); ++i) {
    scores[i] = (static_cast<double>(sums[i]) - static_cast<double>(count) * out.mu[i]) /
                out.scale[i];
  }
  return scores;
}

namespace {

void require_nonempty(const BnnModel& model) {
  if (model.empty()) fail(ErrorCode::InvalidConfig, "model has no layers");
}

std::vector<std::int64_t> pm_sums(const BitMatrix& w, const BitVector& a) {
  const auto pop = serial::binary_gemv(w, a);
  const auto n = static_cast<std::int64_t>(w.cols());
  std::vector<std::int64_t> s(pop.size());
  for (std::size_t i = 0; i < pop.size(); ++i) s[i] = 2 * static_cast<std::int64_t>(pop[i]) - n;
  return s;
}

}  // namespace

std::vector<double> conventional_scores(const BnnModel& model, std::span<const double> x) {
  require_nonempty(model);
  const std::size_t depth = model.depth();
  if (depth == 1) {
    check_pixels(x, model.input_size());
    const auto& l = model.layer(0);
    const auto z = signed_dot(model.first_layer_real(), x);
    std::vector<double> scores(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double zpm = 2.0 * z[i] - static_cast<double>(l.weights.row_sum(i));
      scores[i] = (zpm - l.mu[i]) / l.scale[i];
    }
    return scores;
  }
  BitVector a = first_layer_forward_real(model.first_layer_real(), x);
  for (std::size_t k = 1; k + 1 < depth; ++k) a = layer_forward_binary(model.binary_layer(k), a);
  return model.output_scores(pm_sums(model.layer(depth - 1).weights, a), 1);
}

std::size_t infer_conventional(const BnnModel& model, std::span<const double> x) {
  return argmax(conventional_scores(model, x));
}

std::size_t infer_presentations(const BnnModel& model, std::span<const BitVector> presentations,
                                int accumulation_layer) {
  require_nonempty(model);
  if (presentations.empty()) fail(ErrorCode::InvalidConfig, "no presentations");
  const std::size_t depth = model.depth();
  if (accumulation_layer < 1 || static_cast<std::size_t>(accumulation_layer) > depth) {
    fail(ErrorCode::InvalidConfig,
         "accumulation layer " + std::to_string(accumulation_layer) + " outside [1, " +
             std::to_string(depth) + "]");
  }
  const auto acc = static_cast<std::size_t>(accumulation_layer - 1);
  const auto count = static_cast<std::int64_t>(presentations.size());

  std::vector<std::int64_t> sums(model.layer(acc).weights.rows(), 0);
  for (const BitVector& x : presentations) {
    if (x.size() != model.input_size()) {
      fail(ErrorCode::DimensionMismatch, "presentation width " + std::to_string(x.size()) +
                                             " != input size " +
                                             std::to_string(model.input_size()));
    }
    BitVector a = x;
    for (std::size_t k = 0; k < acc; ++k) a = layer_forward_binary(model.binary_layer(k), a);
    const auto s = pm_sums(model.layer(acc).weights, a);
    for (std::size_t i = 0; i < s.size(); ++i) sums[i] += s[i];
  }

  if (acc + 1 == depth) return argmax(model.output_scores(sums, count));

  const auto& mu = model.layer(acc).mu;
  BitVector a(sums.size());
  for (std::size_t i = 0; i < sums.size(); ++i) {
    if (reaches_threshold(sums[i], count, mu[i])) a.set(i, true);
  }
  for (std::size_t k = acc + 1; k + 1 < depth; ++k) {
    a = layer_forward_binary(model.binary_layer(k), a);
  }
  return argmax(model.output_scores(pm_sums(model.layer(depth - 1).weights, a), 1));
}

std::size_t infer_stochastic(const BnnModel& model, std::span<const double> x,
                             const StochasticConfig& cfg, const PixelSampler& rng) {
  require_nonempty(model);
  cfg.validate(model.depth());
  if (x.size() != model.input_size()) {
    fail(ErrorCode::DimensionMismatch, "input has " + std::to_string(x.size()) +
                                           " pixels, model expects " +
                                           std::to_string(model.input_size()));
  }
  const auto presentations = serial::sample_presentations(x, cfg.presentations, rng);
  return infer_presentations(model, presentations, cfg.accumulation_layer);
}

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) {
    fail(ErrorCode::DimensionMismatch, "prediction and label counts differ");
  }
  if (labels.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

std::vector<int> predict_conventional(const BnnModel& model, const Dataset& data) {
  require_nonempty(model);
  const auto n = static_cast<std::ptrdiff_t>(data.size());
  std::vector<int> out(data.size());
#pragma omp parallel for schedule(dynamic, 32)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    out[i] = static_cast<int>(infer_conventional(model, data.image(static_cast<std::size_t>(i))));
  }
  return out;
}

std::vector<int> predict_stochastic(const BnnModel& model, const Dataset& data,
                                    const StochasticConfig& cfg) {
  require_nonempty(model);
  cfg.validate(model.depth());
  const PixelSampler root(cfg);
  const auto n = static_cast<std::ptrdiff_t>(data.size());
  std::vector<int> out(data.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    out[idx] = static_cast<int>(infer_stochastic(model, data.image(idx), cfg, root.fork(idx)));
  }
  return out;
}

namespace serial {

std::vector<int> predict_conventional(const BnnModel& model, const Dataset& data) {
  std::vector<int> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    out[i] = static_cast<int>(infer_conventional(model, data.image(i)));
  }
  return out;
}

std::vector<int> predict_stochastic(const BnnModel& model, const Dataset& data,
                                    const StochasticConfig& cfg) {
  cfg.validate(model.depth());
  const PixelSampler root(cfg);
  std::vector<int> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    out[i] = static_cast<int>(infer_stochastic(model, data.image(i), cfg, root.fork(i)));
  }
  return out;
}

}  // namespace serial

}  // namespace sbnn
