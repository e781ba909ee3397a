#include "wavray/metrics.hpp"

#include <algorithm>
#include <cstdio>

#include "wavray/tensor.hpp"

namespace wavray {

namespace {

double f1_from_confusion(const std::vector<std::size_t>& confusion, std::size_t classes, std::size_t total) {
  double score = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    std::size_t support = 0, predicted = 0;
    for (std::size_t k = 0; k < classes; ++k) {
      support += confusion[c * classes + k];
      predicted += confusion[k * classes + c];
    }
    const std::size_t hits = confusion[c * classes + c];
    if (support == 0 || hits == 0) continue;
    const double precision = static_cast<double>(hits) / static_cast<double>(predicted);
    const double recall = static_cast<double>(hits) / static_cast<double>(support);
    const double f1 = 2.0 * precision * recall / (precision + recall);
    score += static_cast<double>(support) / static_cast<double>(total) * f1;
  }
  return score;
}

}  // namespace

MetricAccumulator::MetricAccumulator(std::size_t classes)
    : classes_(classes), confusion_(classes * classes, 0) {
  if (classes == 0) throw ValueError("metrics: class count must be positive");
}

void MetricAccumulator::add(std::span<const double> logits, int label, double loss) {
  if (logits.size() != classes_) throw ShapeError("metrics: logits row has the wrong length");
  if (label < 0 || static_cast<std::size_t>(label) >= classes_) {
    throw ValueError("metrics: label " + std::to_string(label) + " out of range");
  }
  // Rank of the true class; ties resolve toward the lower index, like argmax.
  const auto t = static_cast<std::size_t>(label);
  std::size_t rank = 0;
  std::size_t best = 0;
  for (std::size_t c = 0; c < classes_; ++c) {
    if (logits[c] > logits[best]) best = c;
    if (logits[c] > logits[t] || (logits[c] == logits[t] && c < t)) ++rank;
  }
  ++count_;
  loss_sum_ += loss;
  top1_ += rank == 0 ? 1 : 0;
  top5_ += rank < 5 ? 1 : 0;
  ++confusion_[t * classes_ + best];
}

Metrics MetricAccumulator::finish() const {
  if (count_ == 0) throw ValueError("metrics: empty dataset");
  Metrics m;
  const double n = static_cast<double>(count_);
  m.loss = loss_sum_ / n;
  m.top1 = static_cast<double>(top1_) / n;
  m.top5 = static_cast<double>(top5_) / n;
  m.weighted_f1 = f1_from_confusion(confusion_, classes_, count_);
  return m;
}

double weighted_f1(std::span<const int> predicted, std::span<const int> labels, std::size_t classes) {
  if (predicted.size() != labels.size()) throw ShapeError("weighted_f1: length mismatch");
  if (labels.empty()) throw ValueError("weighted_f1: empty input");
  std::vector<std::size_t> confusion(classes * classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int t = labels[i], p = predicted[i];
    if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= classes || static_cast<std::size_t>(p) >= classes) {
      throw ValueError("weighted_f1: label out of range");
    }
    ++confusion[static_cast<std::size_t>(t) * classes + static_cast<std::size_t>(p)];
  }
  return f1_from_confusion(confusion, classes, labels.size());
}

std::string metrics_header() { return "epoch,loss,top1,top5,weighted_f1,lr,images_per_second"; }

std::string metrics_row(std::size_t epoch, const Metrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%.1f", epoch, m.loss, m.top1, m.top5,
                m.weighted_f1, m.lr, m.images_per_second);
  return buf;
}

}  // namespace wavray
