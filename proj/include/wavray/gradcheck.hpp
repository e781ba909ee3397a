#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "wavray/layers.hpp"
#include "wavray/rng.hpp"
#include "wavray/tensor.hpp"

namespace wavray {

/// One randomly drawn instance of a probe: the leaves to differentiate and a
/// closure recomputing the scalar loss from their current values.
struct ProbeCase {
  ParamList<double> inputs;
  std::function<Tensor<double>()> loss;
  /// Entries checked per input; larger inputs are subsampled.
  std::size_t max_entries = 48;
};

struct GradProbe {
  std::string name;
  std::function<ProbeCase(Rng&)> make;
};

struct InputError {
  std::string input;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

struct ProbeReport {
  std::string name;
  std::vector<InputError> inputs;
  double max_rel_error = 0.0;
  std::size_t attempts = 0;
  bool passed = false;
};

inline constexpr double kGradStep = 1e-5;
inline constexpr double kGradTolerance = 1e-4;
inline constexpr std::size_t kGradRedraws = 3;

/// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

/// Central differences against the reverse pass on one drawn case.
std::vector<InputError> compare_gradients(ProbeCase& c, Rng& rng, double step = kGradStep);

/// Draws a case and compares; on failure redraws up to kGradRedraws times
/// to step off kinks.
ProbeReport finite_diff_check(const GradProbe& probe, std::uint64_t seed,
                              double tolerance = kGradTolerance);

enum class GradScope { kOp, kBlock, kModel };

GradScope parse_grad_scope(const std::string& text);
std::vector<GradProbe> op_probes();
std::vector<GradProbe> block_probes();
std::vector<GradProbe> model_probes();
std::vector<GradProbe> probes_for(GradScope scope);

}  // namespace wavray
