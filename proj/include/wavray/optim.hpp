#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "wavray/layers.hpp"

namespace wavray {

struct AdamWHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

/// Moment buffers in parameter order plus the step counter.
template <typename T>
struct OptimizerState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::uint64_t step = 0;
};

/// Decoupled-decay Adam. Parameters are the leaves handed in at
/// construction; their order fixes the layout of the moment buffers.
template <typename T>
class AdamW {
 public:
  AdamW(ParamList<T> params, AdamWHyper hyper);

  /// p <- p - lr*wd*p, then the bias-corrected Adam update. Parameters
  /// without a gradient buffer are decayed only.
  void step(double lr);
  void zero_grad();

  const ParamList<T>& params() const { return params_; }
  const AdamWHyper& hyper() const { return hyper_; }
  OptimizerState<T>& state() { return state_; }
  const OptimizerState<T>& state() const { return state_; }
  /// Replaces the state after checking every buffer against its parameter.
  void set_state(OptimizerState<T> state);

 private:
  ParamList<T> params_;
  AdamWHyper hyper_;
  OptimizerState<T> state_;
};

/// Linear warmup from peak/25 to peak over warmup_fraction*total_steps,
/// then cosine decay to peak/1e4 at total_steps.
double one_cycle_cosine_lr(std::size_t step, std::size_t total_steps, double peak_lr,
                           double warmup_fraction);

}  // namespace wavray
