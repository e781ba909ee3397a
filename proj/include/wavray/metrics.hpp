#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace wavray {

struct Metrics {
  double loss = 0.0;
  double top1 = 0.0;
  double top5 = 0.0;
  double weighted_f1 = 0.0;
  double lr = 0.0;
  double images_per_second = 0.0;
};

/// Streaming classification statistics: summed loss, top-k hits and a
/// confusion matrix for the weighted F1.
class MetricAccumulator {
 public:
  explicit MetricAccumulator(std::size_t classes);

  /// One sample: its logits row, true label and loss contribution.
  void add(std::span<const double> logits, int label, double loss);
  std::size_t count() const { return count_; }
  /// Throws ValueError when no samples were added.
  Metrics finish() const;

 private:
  std::size_t classes_;
  std::size_t count_ = 0;
  double loss_sum_ = 0.0;
  std::size_t top1_ = 0;
  std::size_t top5_ = 0;
  std::vector<std::size_t> confusion_;  // [true][predicted]
};

/// Σ_c (n_c/N)·F1_c with F1_c = 0 when class c is never predicted correctly.
double weighted_f1(std::span<const int> predicted, std::span<const int> labels, std::size_t classes);

std::string metrics_header();
/// epoch,loss,top1,top5,weighted_f1,lr,images_per_second
std::string metrics_row(std::size_t epoch, const Metrics& m);

}  // namespace wavray
