#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "wavray/checkpoint.hpp"
#include "wavray/config.hpp"
#include "wavray/data.hpp"
#include "wavray/metrics.hpp"

namespace wavray {

/// File names inside a run directory.
struct RunFiles {
  static constexpr const char* kConfig = "config.cfg";
  static constexpr const char* kMetrics = "metrics.csv";
  static constexpr const char* kOrigins = "origins.csv";
  static constexpr const char* kFinal = "final.wrnc";
  static std::string periodic(std::size_t epoch);
};

struct TrainSummary {
  std::vector<Metrics> history;  // one entry per epoch run by this call
  std::size_t first_epoch = 0;   // epoch count before this call
  std::filesystem::path final_checkpoint;
  /// First epoch (1-based) whose train top-1 reached `target`, if any.
  std::optional<std::size_t> epoch_reaching(double target) const;
};

/// Trains `run` on `data`, writing the effective config, the metrics log,
/// periodic and final checkpoints and, when the model has ray layers, the
/// origin trajectory. With `resume`, state is restored from that checkpoint
/// and the logs are appended to. Progress lines go to `progress`.
TrainSummary train_run(const RunConfig& run, const Dataset& data, const std::filesystem::path& out,
                       const std::optional<std::filesystem::path>& resume, std::ostream& progress);

struct EvalResult {
  std::size_t epoch = 0;
  Metrics metrics;
};

/// Rebuilds the model recorded in a checkpoint and evaluates it. The lr
/// column repeats the rate of the checkpoint's last optimizer step.
EvalResult eval_checkpoint(const Checkpoint& ckpt, const Dataset& data);

/// Attenuation maps of every ray layer for one image plus the origin CSV.
/// Returns the number of PGM files written. Raises ValueError when the
/// checkpoint has no ray layers.
std::size_t export_maps(const Checkpoint& ckpt, const std::filesystem::path& image,
                        const std::filesystem::path& out_dir);

/// Origin trajectory as (epoch, mean radius over all origins).
std::vector<std::pair<std::size_t, double>> mean_radius_by_epoch(const std::filesystem::path& origins_csv);

}  // namespace wavray
