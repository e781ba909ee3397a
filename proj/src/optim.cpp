#include "wavray/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace wavray {

template <typename T>
AdamW<T>::AdamW(ParamList<T> params, AdamWHyper hyper) : params_(std::move(params)), hyper_(hyper) {
  for (const auto& p : params_) {
    state_.m.emplace_back(p.tensor.numel(), T(0));
    state_.v.emplace_back(p.tensor.numel(), T(0));
  }
}

template <typename T>
void AdamW<T>::step(double lr) {
  state_.step += 1;
  const double t = static_cast<double>(state_.step);
  const double c1 = 1.0 - std::pow(hyper_.beta1, t);
  const double c2 = 1.0 - std::pow(hyper_.beta2, t);
  const double decay = lr * hyper_.weight_decay;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor<T>& p = params_[k].tensor;
    auto data = p.mutable_data();
    for (T& x : data) x = static_cast<T>(x - decay * x);
    if (!p.has_grad()) continue;
    const auto g = p.grad();
    auto& m = state_.m[k];
    auto& v = state_.v[k];
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double gi = g[i];
      const double mi = hyper_.beta1 * m[i] + (1.0 - hyper_.beta1) * gi;
      const double vi = hyper_.beta2 * v[i] + (1.0 - hyper_.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = (mi / c1) / (std::sqrt(vi / c2) + hyper_.eps);
      data[i] = static_cast<T>(data[i] - lr * update);
    }
  }
}

template <typename T>
void AdamW<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template <typename T>
void AdamW<T>::set_state(OptimizerState<T> state) {
  if (state.m.size() != params_.size() || state.v.size() != params_.size()) {
    throw ShapeError("adamw: state holds " + std::to_string(state.m.size()) + " buffers for " +
                     std::to_string(params_.size()) + " parameters");
  }
  for (std::size_t k = 0; k < params_.size(); ++k) {
    if (state.m[k].size() != params_[k].tensor.numel() || state.v[k].size() != params_[k].tensor.numel()) {
      throw ShapeError("adamw: moment size mismatch for " + params_[k].name);
    }
  }
  state_ = std::move(state);
}

double one_cycle_cosine_lr(std::size_t step, std::size_t total_steps, double peak_lr,
                           double warmup_fraction) {
  if (total_steps == 0) throw ValueError("lr schedule: total_steps must be positive");
  if (step > total_steps) {
    throw ValueError("lr schedule: step " + std::to_string(step) + " exceeds total " +
                     std::to_string(total_steps));
  }
  if (warmup_fraction < 0.0 || warmup_fraction >= 1.0) {
    throw ValueError("lr schedule: warmup fraction must lie in [0,1)");
  }
  const double start = peak_lr / 25.0;
  const double floor = peak_lr / 1e4;
  const double warmup = warmup_fraction * static_cast<double>(total_steps);
  const double s = static_cast<double>(step);
  if (s < warmup) return start + (peak_lr - start) * s / warmup;
  const double progress = (s - warmup) / (static_cast<double>(total_steps) - warmup);
  return floor + (peak_lr - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace wavray
