#include "wavray/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <vector>

#include "wavray/ops.hpp"

namespace wavray {

std::string precision_name(Precision p) { return p == Precision::kFloat64 ? "float64" : "float32"; }

Precision parse_precision(const std::string& text) {
  if (text == "float32" || text == "single") return Precision::kFloat32;
  if (text == "float64" || text == "double") return Precision::kFloat64;
  throw ValueError("precision must be float32 or float64, got '" + text + "'");
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ValueError("train: epochs must be positive");
  if (batch == 0) throw ValueError("train: batch must be positive");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ValueError("train: lr must be positive");
  if (weight_decay < 0.0) throw ValueError("train: weight_decay must be non-negative");
  if (warmup < 0.0 || warmup >= 1.0) throw ValueError("train: warmup must lie in [0,1)");
}

template <typename T>
Trainer<T>::Trainer(const ModelConfig& model, const TrainConfig& train)
    : model_config_(model),
      train_config_((train.validate(), train)),
      rng_(train.seed),
      model_(model, rng_),
      optimizer_(model_.parameters(), AdamWHyper{0.9, 0.999, 1e-8, train.weight_decay}) {}

template <typename T>
std::size_t Trainer<T>::steps_per_epoch(std::size_t dataset_size) const {
  return (dataset_size + train_config_.batch - 1) / train_config_.batch;
}

template <typename T>
Metrics Trainer<T>::run_epoch(const Dataset& data) {
  if (data.size() == 0) throw ValueError("train: empty dataset");
  if (data.classes() != model_config_.classes) {
    throw ValueError("train: dataset has " + std::to_string(data.classes()) + " classes, model expects " +
                     std::to_string(model_config_.classes));
  }
  const auto start = std::chrono::steady_clock::now();
  const std::size_t per_epoch = steps_per_epoch(data.size());
  const std::size_t total = per_epoch * train_config_.epochs;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng_.shuffle(order);

  double lr = 0.0;
  for (std::size_t b = 0; b < per_epoch; ++b) {
    const std::size_t lo = b * train_config_.batch;
    const std::size_t hi = std::min(lo + train_config_.batch, order.size());
    const std::span<const std::size_t> idx(order.data() + lo, hi - lo);
    const auto labels = data.batch_labels(idx);
    optimizer_.zero_grad();
    const Tensor<T> loss = cross_entropy(model_.forward(data.batch<T>(idx)), std::span<const int>(labels));
    if (!std::isfinite(static_cast<double>(loss.item()))) {
      throw DivergenceError("loss became " + std::to_string(static_cast<double>(loss.item())) + " at epoch " +
                            std::to_string(epoch_ + 1) + ", step " +
                            std::to_string(optimizer_.state().step + 1) + "; try a lower lr");
    }
    backward(loss);
    const std::size_t step = std::min<std::size_t>(optimizer_.state().step, total);
    lr = one_cycle_cosine_lr(step, total, train_config_.lr, train_config_.warmup);
    optimizer_.step(lr);
  }
  optimizer_.zero_grad();
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  ++epoch_;
  Metrics m = evaluate(model_, data);
  m.lr = lr;
  m.images_per_second = seconds > 0.0 ? static_cast<double>(data.size()) / seconds : 0.0;
  return m;
}

template <typename T>
Metrics evaluate(const Classifier<T>& model, const Dataset& data, std::size_t batch) {
  if (data.size() == 0) throw ValueError("evaluate: empty dataset");
  if (data.classes() != model.config().classes) {
    throw ValueError("evaluate: dataset has " + std::to_string(data.classes()) + " classes, model expects " +
                     std::to_string(model.config().classes));
  }
  NoGradGuard no_grad;
  const std::size_t k = model.config().classes;
  MetricAccumulator acc(k);
  std::vector<double> row(k);
  for (std::size_t lo = 0; lo < data.size(); lo += batch) {
    const std::size_t hi = std::min(lo + batch, data.size());
    std::vector<std::size_t> idx(hi - lo);
    std::iota(idx.begin(), idx.end(), lo);
    const Tensor<T> logits = model.forward(data.batch<T>(idx));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      double peak = -INFINITY;
      for (std::size_t c = 0; c < k; ++c) {
        row[c] = static_cast<double>(logits[i * k + c]);
        peak = std::max(peak, row[c]);
      }
      double z = 0.0;
      for (double v : row) z += std::exp(v - peak);
      const int label = data.labels[idx[i]];
      acc.add(row, label, std::log(z) + peak - row[static_cast<std::size_t>(label)]);
    }
  }
  return acc.finish();
}

template class Trainer<float>;
template class Trainer<double>;
template Metrics evaluate(const Classifier<float>&, const Dataset&, std::size_t);
template Metrics evaluate(const Classifier<double>&, const Dataset&, std::size_t);

}  // namespace wavray
