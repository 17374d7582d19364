#pragma once

// Binarized fully-connected networks and their two inference procedures:
//
//  * conventional: real-valued first layer on grayscale pixels, XNOR/popcount
//    layers afterwards, argmax on the output layer;
//  * stochastic: the input is replaced by T Bernoulli-sampled binary
//    presentations and the network is run fully binarized, summing
//    pre-activations across presentations at a chosen layer.
//
// Thresholds are kept in the ±1 dot-product domain: a hidden neuron fires iff
// sum_j w_ij a_j >= mu_i, where for the first layer a_j = 2 x_j - 1. This is
// the domain the training graph normalises, and the one in which a binary
// presentation's popcount p maps to 2p - n.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "sbnn/bitcore.hpp"
#include "sbnn/dataset.hpp"
#include "sbnn/encoder.hpp"

namespace sbnn {

inline constexpr std::size_t kMaxLayerWidth = 1024;

enum class InputMode { Grayscale, Stochastic, BlackWhite };

std::string_view to_string(InputMode mode);
// "grayscale", "stochastic", "bw".
InputMode parse_input_mode(std::string_view name);

// Popcount-domain layer: bit i fires iff popcount(XNOR(W_i, a)) >= thresholds[i].
struct BinaryLayer {
  BitMatrix weights;
  std::vector<std::int32_t> thresholds;
};

// Non-binary first layer: bit i fires iff sum_j sign(W_ij) x_j >= thresholds[i]
// with x the raw pixel intensities in [0,1].
struct FirstLayerReal {
  BitMatrix weights;
  std::vector<double> thresholds;
  int input_bits = 8;
  // Optional row-major ±1 copy of `weights`; filled by BnnModel.
  std::vector<double> dense_signs;
};

struct FoldedThresholds {
  std::vector<std::int32_t> theta;
  std::size_t clamped = 0;  // neurons whose exact threshold fell outside [0, n]
};

// Folds batch-norm statistics (gamma = 1, beta = 0) into popcount thresholds:
// theta_i is the least p with 2p - n >= mu_i, clamped to [0, n].
// Throws DegenerateBatchNorm if any sigma <= 0 or mu is NaN.
FoldedThresholds fold_thresholds(std::span<const double> mu, std::span<const double> sigma,
                                 std::size_t fan_in);

// Exact test of sum >= count * mu for 1 <= count <= 2^31; the product is never rounded.
bool reaches_threshold(std::int64_t sum, std::int64_t count, double mu) noexcept;

BitVector layer_forward_binary(const BinaryLayer& layer, const BitVector& a);
BitVector first_layer_forward_real(const FirstLayerReal& layer, std::span<const double> x);

// Lowest index among the maxima.
std::size_t argmax(std::span<const double> scores) noexcept;

struct ModelMetadata {
  InputMode training_mode = InputMode::Grayscale;
  int presentations = 1;
  friend bool operator==(const ModelMetadata&, const ModelMetadata&) = default;
};

class BnnModel {
 public:
  // One trained layer. `scale` only affects the output layer, where class
  // scores are (z - mu) / scale; hidden layers fire on the sign of z - mu.
  struct Layer {
    BitMatrix weights;
    std::vector<double> mu;
    std::vector<double> scale;
    friend bool operator==(const Layer&, const Layer&) = default;
  };

  enum class WidthCheck { Enforce, Skip };

  BnnModel() = default;
  explicit BnnModel(std::vector<Layer> layers, ModelMetadata meta = {},
                    WidthCheck width_check = WidthCheck::Enforce);

  std::size_t depth() const noexcept { return layers_.size(); }
  bool empty() const noexcept { return layers_.empty(); }
  const Layer& layer(std::size_t k) const { return layers_.at(k); }
  std::span<const Layer> layers() const noexcept { return layers_; }
  const ModelMetadata& metadata() const noexcept { return meta_; }

  std::size_t input_size() const noexcept;
  std::size_t output_size() const noexcept;
  // {input, hidden..., output}
  std::vector<std::size_t> layer_sizes() const;

  // Layer k (0-based) with thresholds folded into the popcount domain.
  const BinaryLayer& binary_layer(std::size_t k) const { return binary_.at(k); }
  // The first layer expressed on raw [0,1] pixels.
  const FirstLayerReal& first_layer_real() const { return first_real_; }

  // Class scores from summed ±1 pre-activations over `count` presentations.
  std::vector<double> output_scores(std::span<const std::int64_t> sums, std::int64_t count) const;

  friend bool operator==(const BnnModel& a, const BnnModel& b) {
    return a.layers_ == b.layers_ && a.meta_ == b.meta_;
  }

 private:
  std::vector<Layer> layers_;
  ModelMetadata meta_;
  std::vector<BinaryLayer> binary_;
  FirstLayerReal first_real_;
};

std::vector<double> conventional_scores(const BnnModel& model, std::span<const double> x);
std::size_t infer_conventional(const BnnModel& model, std::span<const double> x);

// Runs the network on pre-sampled binary presentations, accumulating at
// `accumulation_layer` (1-based; depth means summing output scores).
std::size_t infer_presentations(const BnnModel& model, std::span<const BitVector> presentations,
                                int accumulation_layer);

// Samples cfg.presentations binary versions of x from `rng` and classifies them.
std::size_t infer_stochastic(const BnnModel& model, std::span<const double> x,
                             const StochasticConfig& cfg, const PixelSampler& rng);

// Dataset-level maps; image i of a stochastic run uses rng.fork(i).
std::vector<int> predict_conventional(const BnnModel& model, const Dataset& data);
std::vector<int> predict_stochastic(const BnnModel& model, const Dataset& data,
                                    const StochasticConfig& cfg);
double accuracy(std::span<const int> predictions, std::span<const int> labels);

namespace serial {
std::vector<int> predict_conventional(const BnnModel& model, const Dataset& data);
std::vector<int> predict_stochastic(const BnnModel& model, const Dataset& data,
                                    const StochasticConfig& cfg);
}  // namespace serial

}  // namespace sbnn
