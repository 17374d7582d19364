#include "sbnn/training.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "sbnn/errors.hpp"
#include "sbnn/random.hpp"

namespace sbnn {

void TrainConfig::validate() const {
  if (epochs < 0) fail(ErrorCode::InvalidConfig, "epochs must be >= 0");
  if (batch_size == 0) fail(ErrorCode::InvalidConfig, "batch size must be >= 1");
  if (!(adam.lr > 0.0)) fail(ErrorCode::InvalidConfig, "learning rate must be > 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    fail(ErrorCode::InvalidConfig, "Adam betas must lie in [0, 1)");
  }
  if (!(adam.eps > 0.0)) fail(ErrorCode::InvalidConfig, "Adam epsilon must be > 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail(ErrorCode::InvalidConfig, "dropout must be in [0, 1)");
  if (!(bn_momentum >= 0.0 && bn_momentum < 1.0)) {
    fail(ErrorCode::InvalidConfig, "batch-norm momentum must be in [0, 1)");
  }
  if (!(bn_eps > 0.0)) fail(ErrorCode::InvalidConfig, "batch-norm epsilon must be > 0");
  if (input_mode == InputMode::Stochastic && presentations < 1) {
    fail(ErrorCode::InvalidConfig, "stochastic training needs T >= 1");
  }
}

std::vector<std::size_t> TrainState::layer_sizes() const {
  std::vector<std::size_t> sizes;
  if (layers.empty()) return sizes;
  sizes.push_back(static_cast<std::size_t>(layers.front().weights.cols()));
  for (const auto& l : layers) sizes.push_back(static_cast<std::size_t>(l.weights.rows()));
  return sizes;
}

TrainState init_train_state(std::span<const std::size_t> sizes, std::uint64_t seed) {
  TrainState state;
  for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
    const auto in = static_cast<Eigen::Index>(sizes[k]);
    const auto out = static_cast<Eigen::Index>(sizes[k + 1]);
    TrainableLayer layer;
    layer.weights.resize(out, in);
    SplitMix64 gen(derive_seed(seed, k));
    for (Eigen::Index r = 0; r < out; ++r) {
      for (Eigen::Index c = 0; c < in; ++c) layer.weights(r, c) = 2.0 * gen.uniform() - 1.0;
    }
    layer.adam_m = Matrix::Zero(out, in);
    layer.adam_v = Matrix::Zero(out, in);
    layer.running_mean = RowVector::Zero(out);
    layer.running_std = RowVector::Ones(out);
    state.layers.push_back(std::move(layer));
  }
  return state;
}

BitMatrix binarize_weights(const Matrix& w) {
  BitMatrix out(static_cast<std::size_t>(w.rows()), static_cast<std::size_t>(w.cols()));
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    for (Eigen::Index c = 0; c < w.cols(); ++c) {
      const double v = w(r, c);
      if (!std::isfinite(v)) {
        fail(ErrorCode::NonFiniteWeight,
             "weight (" + std::to_string(r) + ", " + std::to_string(c) + ") is not finite");
      }
      if (v >= 0.0) out.set(static_cast<std::size_t>(r), static_cast<std::size_t>(c), true);
    }
  }
  return out;
}

Matrix sign_matrix(const Matrix& w) {
  return w.unaryExpr([](double v) { return v >= 0.0 ? 1.0 : -1.0; });
}

BatchNormForward batchnorm_forward(const Matrix& z, const RowVector& running_mean,
                                   const RowVector& running_std, bool training, double eps) {
  if (z.rows() == 0) fail(ErrorCode::EmptyBatch, "batch norm on an empty batch");
  BatchNormForward f;
  f.eps = eps;
  if (training) {
    f.mean = z.colwise().mean();
    f.centered = z.rowwise() - f.mean;
    f.stddev = (f.centered.array().square().colwise().sum() / static_cast<double>(z.rows()))
                   .sqrt()
                   .matrix();
  } else {
    if (running_mean.size() != z.cols() || running_std.size() != z.cols()) {
      fail(ErrorCode::DimensionMismatch, "running statistics do not match batch width");
    }
    f.mean = running_mean;
    f.stddev = running_std;
    f.centered = z.rowwise() - f.mean;
  }
  const RowVector denom = (f.stddev.array() + eps).matrix();
  f.zhat = f.centered.array().rowwise() / denom.array();
  return f;
}

Matrix batchnorm_backward(const Matrix& g, const BatchNormForward& fwd) {
  if (g.rows() != fwd.centered.rows() || g.cols() != fwd.centered.cols()) {
    fail(ErrorCode::DimensionMismatch, "batchnorm_backward: gradient shape differs from forward");
  }
  // zhat_j = d_j / (s + eps), d = z - mean(z), s = sqrt(mean(d^2)):
  // dL/dz_i = (g_i - mean(g)) / (s + eps) - d_i * sum_j(g_j d_j) / (n s (s + eps)^2)
  const auto n = static_cast<double>(g.rows());
  Matrix out(g.rows(), g.cols());
  for (Eigen::Index c = 0; c < g.cols(); ++c) {
    const double s = fwd.stddev(c);
    const double inv = 1.0 / (s + fwd.eps);
    const double gmean = g.col(c).mean();
    const double gd = g.col(c).dot(fwd.centered.col(c));
    // With s == 0 every d_i is zero, so the second term vanishes.
    const double k = s > 0.0 ? gd / (n * s) * inv * inv : 0.0;
    out.col(c) = (g.col(c).array() - gmean) * inv - fwd.centered.col(c).array() * k;
  }
  return out;
}

Matrix ste_mask(const Matrix& g, const Matrix& zhat) {
  if (g.rows() != zhat.rows() || g.cols() != zhat.cols()) {
    fail(ErrorCode::DimensionMismatch, "ste_mask: shapes differ");
  }
  return (zhat.array().abs() <= 1.0).select(g, 0.0);
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    out.row(r) = (logits.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

double cross_entropy(const Matrix& probs, const Matrix& onehot) {
  double total = 0.0;
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    Eigen::Index label = 0;
    onehot.row(r).maxCoeff(&label);
    total -= std::log(std::max(probs(r, label), std::numeric_limits<double>::min()));
  }
  return total / static_cast<double>(std::max<Eigen::Index>(probs.rows(), 1));
}

Matrix softmax_xent_backward(const Matrix& probs, const Matrix& onehot) {
  if (probs.rows() != onehot.rows() || probs.cols() != onehot.cols()) {
    fail(ErrorCode::DimensionMismatch, "softmax_xent_backward: shapes differ");
  }
  for (Eigen::Index r = 0; r < onehot.rows(); ++r) {
    int ones = 0;
    for (Eigen::Index c = 0; c < onehot.cols(); ++c) {
      const double v = onehot(r, c);
      if (v == 1.0) {
        ++ones;
      } else if (v != 0.0) {
        ones = -1;
        break;
      }
    }
    if (ones != 1) fail(ErrorCode::InvalidLabel, "row " + std::to_string(r) + " is not one-hot");
    if (std::abs(probs.row(r).sum() - 1.0) > 1e-6) {
      fail(ErrorCode::InvalidLabel, "row " + std::to_string(r) + " of a_L does not sum to 1");
    }
  }
  return probs - onehot;
}

void adam_clip_update(TrainableLayer& layer, const Matrix& grad, std::int64_t step,
                      const AdamConfig& cfg) {
  if (step < 1) fail(ErrorCode::InvalidConfig, "Adam step must be >= 1");
  if (grad.rows() != layer.weights.rows() || grad.cols() != layer.weights.cols()) {
    fail(ErrorCode::DimensionMismatch, "gradient shape differs from weights");
  }
  if (!grad.allFinite()) fail(ErrorCode::NonFiniteGradient, "gradient has NaN or inf entries");
  layer.adam_m = cfg.beta1 * layer.adam_m + (1.0 - cfg.beta1) * grad;
  layer.adam_v = cfg.beta2 * layer.adam_v + (1.0 - cfg.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  layer.weights.array() -=
      cfg.lr * (layer.adam_m.array() / c1) / ((layer.adam_v.array() / c2).sqrt() + cfg.eps);
  layer.weights = layer.weights.cwiseMax(-1.0).cwiseMin(1.0);
}

void prepare_input(std::span<const double> pixels, InputMode mode, int presentations,
                   const PixelSampler& rng, std::span<double> out) {
  switch (mode) {
    case InputMode::Grayscale:
      for (std::size_t j = 0; j < pixels.size(); ++j) out[j] = 2.0 * pixels[j] - 1.0;
      return;
    case InputMode::BlackWhite:
      for (std::size_t j = 0; j < pixels.size(); ++j) out[j] = pixels[j] > 0.5 ? 1.0 : -1.0;
      return;
    case InputMode::Stochastic: {
      const auto levels = bernoulli_levels(pixels);
      std::vector<std::uint8_t> draws(pixels.size());
      std::fill(out.begin(), out.end(), 0.0);
      for (int t = 0; t < presentations; ++t) {
        rng.draws(static_cast<std::uint64_t>(t), draws);
        for (std::size_t j = 0; j < pixels.size(); ++j) out[j] += draws[j] < levels[j] ? 1.0 : -1.0;
      }
      const double inv = 1.0 / presentations;
      for (double& v : out) v *= inv;
      return;
    }
  }
}

Dataset black_white(const Dataset& data) {
  Dataset out = data;
  for (double& p : out.pixels) p = p > 0.5 ? 1.0 : 0.0;
  return out;
}

BnnModel export_model(const TrainState& state, const ModelMetadata& meta, double bn_eps) {
  std::vector<BnnModel::Layer> layers;
  for (const auto& l : state.layers) {
    BnnModel::Layer out;
    out.weights = binarize_weights(l.weights);
    out.mu.assign(l.running_mean.data(), l.running_mean.data() + l.running_mean.size());
    out.scale.resize(static_cast<std::size_t>(l.running_std.size()));
    for (Eigen::Index i = 0; i < l.running_std.size(); ++i) {
      out.scale[static_cast<std::size_t>(i)] = l.running_std(i) + bn_eps;
    }
    layers.push_back(std::move(out));
  }
  return BnnModel(std::move(layers), meta, BnnModel::WidthCheck::Skip);
}

namespace {

struct LayerCache {
  Matrix input;  // activations entering the layer
  Matrix wsign;
  BatchNormForward bn;
  Matrix dropout;  // empty when unused; scaled keep mask on the layer output
};

Matrix onehot_batch(const Dataset& data, std::span<const std::size_t> idx, std::size_t classes) {
  Matrix y = Matrix::Zero(static_cast<Eigen::Index>(idx.size()), static_cast<Eigen::Index>(classes));
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const int label = data.labels[idx[r]];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      fail(ErrorCode::InvalidLabel, "label " + std::to_string(label) + " outside [0, " +
                                        std::to_string(classes) + ")");
    }
    y(static_cast<Eigen::Index>(r), label) = 1.0;
  }
  return y;
}

Matrix input_batch(const Dataset& data, std::span<const std::size_t> idx, const TrainConfig& cfg,
                   const PixelSampler& epoch_rng) {
  Matrix x(static_cast<Eigen::Index>(idx.size()), static_cast<Eigen::Index>(data.dim()));
  std::vector<double> row(data.dim());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    prepare_input(data.image(idx[r]), cfg.input_mode, cfg.presentations, epoch_rng.fork(idx[r]),
                  row);
    x.row(static_cast<Eigen::Index>(r)) = Eigen::Map<const RowVector>(row.data(), row.size());
  }
  return x;
}

}  // namespace

std::vector<int> predict_training_graph(const TrainState& state, const Dataset& data,
                                        double bn_eps) {
  const auto n = static_cast<Eigen::Index>(data.size());
  Matrix a(n, static_cast<Eigen::Index>(data.dim()));
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto img = data.image(static_cast<std::size_t>(r));
    for (Eigen::Index c = 0; c < a.cols(); ++c) a(r, c) = 2.0 * img[static_cast<std::size_t>(c)] - 1.0;
  }
  std::vector<int> out(data.size());
  const std::size_t depth = state.layers.size();
  for (std::size_t k = 0; k < depth; ++k) {
    const auto& l = state.layers[k];
    const Matrix z = a * sign_matrix(l.weights).transpose();
    const auto bn = batchnorm_forward(z, l.running_mean, l.running_std, false, bn_eps);
    if (k + 1 < depth) {
      a = sign_matrix(bn.zhat);
    } else {
      std::vector<double> scores(static_cast<std::size_t>(bn.zhat.cols()));
      for (Eigen::Index r = 0; r < n; ++r) {
        for (Eigen::Index c = 0; c < bn.zhat.cols(); ++c) scores[static_cast<std::size_t>(c)] = bn.zhat(r, c);
        out[static_cast<std::size_t>(r)] = static_cast<int>(argmax(scores));
      }
    }
  }
  return out;
}

double evaluate_for_mode(const BnnModel& model, const Dataset& data, InputMode mode,
                         int presentations, RngKind rng, std::uint64_t seed) {
  switch (mode) {
    case InputMode::Grayscale:
      return accuracy(predict_conventional(model, data), data.labels);
    case InputMode::BlackWhite:
      return accuracy(predict_conventional(model, black_white(data)), data.labels);
    case InputMode::Stochastic: {
      StochasticConfig cfg;
      cfg.presentations = presentations;
      cfg.rng = rng;
      cfg.seed = seed;
      return accuracy(predict_stochastic(model, data, cfg), data.labels);
    }
  }
  return 0.0;
}

TrainResult train(TrainState& state, const Dataset& train_set, const Dataset* test_set,
                  const TrainConfig& cfg, const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.validate();
  if (state.layers.empty()) fail(ErrorCode::InvalidConfig, "training state has no layers");
  if (static_cast<std::size_t>(state.layers.front().weights.cols()) != train_set.dim()) {
    fail(ErrorCode::DimensionMismatch, "input layer width does not match image size");
  }
  const ModelMetadata meta{cfg.input_mode,
                           cfg.input_mode == InputMode::Stochastic ? cfg.presentations : 1};
  TrainResult result;
  const std::size_t depth = state.layers.size();
  const auto classes = static_cast<std::size_t>(state.layers.back().weights.rows());
  const std::size_t n = train_set.size();

  std::vector<std::size_t> order(n);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const std::uint64_t epoch_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch));
    std::iota(order.begin(), order.end(), std::size_t{0});
    SplitMix64 shuffle(derive_seed(epoch_seed, 1));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
    const PixelSampler epoch_rng(cfg.rng, derive_seed(epoch_seed, 2));
    SplitMix64 dropout_gen(derive_seed(epoch_seed, 3));

    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t first = 0; first < n; first += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, n - first);
      const std::span<const std::size_t> idx(order.data() + first, count);
      const auto rows = static_cast<Eigen::Index>(count);

      std::vector<LayerCache> cache(depth);
      Matrix a = input_batch(train_set, idx, cfg, epoch_rng);
      Matrix probs;
      for (std::size_t k = 0; k < depth; ++k) {
        TrainableLayer& l = state.layers[k];
        LayerCache& c = cache[k];
        c.wsign = sign_matrix(l.weights);
        const Matrix z = a * c.wsign.transpose();
        c.input = std::move(a);
        c.bn = batchnorm_forward(z, l.running_mean, l.running_std, true, cfg.bn_eps);
        l.running_mean = cfg.bn_momentum * l.running_mean + (1.0 - cfg.bn_momentum) * c.bn.mean;
        l.running_std = cfg.bn_momentum * l.running_std + (1.0 - cfg.bn_momentum) * c.bn.stddev;
        if (k + 1 < depth) {
          a = sign_matrix(c.bn.zhat);
          if (cfg.dropout > 0.0) {
            const double keep_scale = 1.0 / (1.0 - cfg.dropout);
            c.dropout.resize(a.rows(), a.cols());
            for (Eigen::Index i = 0; i < c.dropout.size(); ++i) {
              c.dropout.data()[i] = dropout_gen.uniform() >= cfg.dropout ? keep_scale : 0.0;
            }
            a = a.cwiseProduct(c.dropout);
          }
        } else {
          probs = softmax_rows(c.bn.zhat);
        }
      }

      const Matrix y = onehot_batch(train_set, idx, classes);
      const double loss = cross_entropy(probs, y);
      if (!std::isfinite(loss)) {
        throw TrainingDiverged(epoch, "non-finite loss in epoch " + std::to_string(epoch));
      }
      loss_sum += loss * static_cast<double>(count);
      for (Eigen::Index r = 0; r < rows; ++r) {
        Eigen::Index pred = 0;
        probs.row(r).maxCoeff(&pred);
        correct += train_set.labels[idx[static_cast<std::size_t>(r)]] == pred;
      }

      // Backward: g holds dL/dzhat of the current layer.
      Matrix g = softmax_xent_backward(probs, y) / static_cast<double>(count);
      std::vector<Matrix> grads(depth);
      for (std::size_t k = depth; k-- > 0;) {
        LayerCache& c = cache[k];
        const Matrix gz = batchnorm_backward(g, c.bn);
        grads[k] = gz.transpose() * c.input;
        if (k > 0) {
          Matrix ga = gz * c.wsign;
          if (cache[k - 1].dropout.size() != 0) ga = ga.cwiseProduct(cache[k - 1].dropout);
          g = ste_mask(ga, cache[k - 1].bn.zhat);
        }
      }
      ++state.step;
      for (std::size_t k = 0; k < depth; ++k) {
        adam_clip_update(state.layers[k], grads[k], state.step, cfg.adam);
      }
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.loss = loss_sum / static_cast<double>(std::max<std::size_t>(n, 1));
    entry.train_acc = static_cast<double>(correct) / static_cast<double>(std::max<std::size_t>(n, 1));
    entry.test_acc = std::numeric_limits<double>::quiet_NaN();
    if (!std::isfinite(entry.loss)) {
      throw TrainingDiverged(epoch, "non-finite loss in epoch " + std::to_string(epoch));
    }
    if (test_set != nullptr && test_set->size() > 0) {
      const BnnModel model = export_model(state, meta, cfg.bn_eps);
      entry.test_acc = evaluate_for_mode(model, *test_set, cfg.input_mode, meta.presentations,
                                         cfg.rng, derive_seed(cfg.seed, 0xe7a1));
    }
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  result.model = export_model(state, meta, cfg.bn_eps);
  return result;
}

}  // namespace sbnn
