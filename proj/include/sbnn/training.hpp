#pragma once

// BNN training: sign-binarized forward pass, batch norm with fixed gamma = 1
// and beta = 0, softmax cross-entropy, straight-through backward pass and
// Adam on real-valued shadow weights clipped to [-1, 1].
//
// Batches are Eigen matrices with one sample per row.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "sbnn/bitcore.hpp"
#include "sbnn/dataset.hpp"
#include "sbnn/encoder.hpp"
#include "sbnn/model.hpp"

namespace sbnn {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  int epochs = 20;
  std::size_t batch_size = 100;
  AdamConfig adam;
  double dropout = 0.2;       // on hidden activations
  double bn_momentum = 0.9;   // running = m * running + (1 - m) * batch
  double bn_eps = 1e-5;
  InputMode input_mode = InputMode::Grayscale;
  int presentations = 1;      // T for InputMode::Stochastic
  RngKind rng = RngKind::Counter64;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainableLayer {
  Matrix weights;  // W_a, rows = output neurons, entries in [-1, 1]
  Matrix adam_m;
  Matrix adam_v;
  RowVector running_mean;
  RowVector running_std;
};

struct TrainState {
  std::vector<TrainableLayer> layers;
  std::int64_t step = 0;  // Adam step counter

  std::vector<std::size_t> layer_sizes() const;
};

// sizes = {input, hidden..., output}; W_a uniform in [-1, 1].
TrainState init_train_state(std::span<const std::size_t> sizes, std::uint64_t seed);

// Packs sign(W_a) (sign(0) = +1). Throws NonFiniteWeight for NaN/inf.
BitMatrix binarize_weights(const Matrix& w);
// Same signs as a ±1 real matrix for the training graph.
Matrix sign_matrix(const Matrix& w);

struct BatchNormForward {
  Matrix zhat;
  Matrix centered;   // z - mean
  RowVector mean;
  RowVector stddev;  // population standard deviation
  double eps = 0.0;
};

// Training mode normalises by batch statistics, zhat = (z - mean) / (std + eps);
// eval mode uses the running statistics. Throws EmptyBatch for zero rows.
BatchNormForward batchnorm_forward(const Matrix& z, const RowVector& running_mean,
                                   const RowVector& running_std, bool training, double eps);

// Gradient of the training-mode normalisation with respect to z.
Matrix batchnorm_backward(const Matrix& g_zhat, const BatchNormForward& fwd);

// g * 1{|zhat| <= 1}: derivative of Clip(zhat, -1, 1) in place of sign's.
Matrix ste_mask(const Matrix& g, const Matrix& zhat);

Matrix softmax_rows(const Matrix& logits);
// Mean cross-entropy of row-wise probabilities against one-hot targets.
double cross_entropy(const Matrix& probs, const Matrix& onehot);
// a_L - y. Throws InvalidLabel unless y is one-hot and rows of a sum to 1.
Matrix softmax_xent_backward(const Matrix& probs, const Matrix& onehot);

// Adam with bias correction at step t >= 1, then clip to [-1, 1].
void adam_clip_update(TrainableLayer& layer, const Matrix& grad, std::int64_t step,
                      const AdamConfig& cfg);

// Network input for one sample in the ±1 domain used by the first layer.
// Stochastic mode averages `presentations` sampled binary images.
void prepare_input(std::span<const double> pixels, InputMode mode, int presentations,
                   const PixelSampler& rng, std::span<double> out);

struct EpochLog {
  int epoch = 0;
  double train_acc = 0.0;
  double test_acc = 0.0;  // NaN without a test set
  double loss = 0.0;
};

struct TrainResult {
  BnnModel model;
  std::vector<EpochLog> log;
};

// Binarized weights, running means as thresholds, running std + eps as output scales.
BnnModel export_model(const TrainState& state, const ModelMetadata& meta, double bn_eps);

// Eval-mode pass of the training graph (binarized weights, running
// statistics) on grayscale inputs; the reference for exported models.
std::vector<int> predict_training_graph(const TrainState& state, const Dataset& data,
                                        double bn_eps);

// Runs cfg.epochs of mini-batch training on `train_set`, updating `state`.
// With a test set, each epoch logs the exported model's accuracy under the
// matching inference mode. Throws TrainingDiverged on a non-finite loss.
TrainResult train(TrainState& state, const Dataset& train_set, const Dataset* test_set,
                  const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

// Test accuracy of an exported model under the inference matching `mode`.
double evaluate_for_mode(const BnnModel& model, const Dataset& data, InputMode mode,
                         int presentations, RngKind rng, std::uint64_t seed);

// Copy of `data` with pixels thresholded at 0.5.
Dataset black_white(const Dataset& data);

}  // namespace sbnn
