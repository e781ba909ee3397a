#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>

#include "wavray/data.hpp"
#include "wavray/metrics.hpp"
#include "wavray/model.hpp"
#include "wavray/optim.hpp"

namespace wavray {

/// Raised when the training loss stops being finite.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

enum class Precision { kFloat32, kFloat64 };

std::string precision_name(Precision p);
Precision parse_precision(const std::string& text);

/// Defaults are the full-scale recipe; desk runs override them.
struct TrainConfig {
  std::size_t epochs = 300;
  std::size_t batch = 1024;
  double lr = 1e-3;
  double weight_decay = 0.05;
  double warmup = 0.1;
  std::uint64_t seed = 0;
  Precision precision = Precision::kFloat32;
  /// Write a checkpoint every this many epochs (0: final only).
  std::size_t checkpoint_every = 0;

  void validate() const;
};

/// Model, optimizer and data-order generator of one run. The model is
/// initialized from `seed`; the same generator then drives the shuffles.
template <typename T>
class Trainer {
 public:
  Trainer(const ModelConfig& model, const TrainConfig& train);

  /// One pass over the shuffled data followed by an evaluation pass over
  /// the whole set. Throws DivergenceError on a non-finite loss.
  Metrics run_epoch(const Dataset& data);

  Classifier<T>& model() { return model_; }
  const Classifier<T>& model() const { return model_; }
  AdamW<T>& optimizer() { return optimizer_; }
  const AdamW<T>& optimizer() const { return optimizer_; }
  Rng& rng() { return rng_; }
  const Rng& rng() const { return rng_; }
  const ModelConfig& model_config() const { return model_config_; }
  const TrainConfig& train_config() const { return train_config_; }
  std::size_t epoch() const { return epoch_; }
  void set_epoch(std::size_t epoch) { epoch_ = epoch; }

  std::size_t steps_per_epoch(std::size_t dataset_size) const;

 private:
  ModelConfig model_config_;
  TrainConfig train_config_;
  Rng rng_;
  Classifier<T> model_;
  AdamW<T> optimizer_;
  std::size_t epoch_ = 0;
};

/// Loss, accuracies and weighted F1 over a dataset, in fixed order.
template <typename T>
Metrics evaluate(const Classifier<T>& model, const Dataset& data, std::size_t batch = 64);

}  // namespace wavray
