#include "wavray/workflow.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "wavray/export.hpp"
#include "wavray/train.hpp"

namespace wavray {

namespace fs = std::filesystem;

namespace {

template <typename F>
auto with_precision(Precision p, F&& f) {
  if (p == Precision::kFloat64) return f(double{});
  return f(float{});
}

Precision recorded_precision(const Checkpoint& ckpt) {
  const auto it = ckpt.config.find("state.precision");
  if (it == ckpt.config.end()) throw CheckpointError("checkpoint: missing state.precision");
  return parse_precision(it->second);
}

void check_extent(const ModelConfig& model, const Dataset& data) {
  if (data.height != model.input || data.width != model.input) {
    throw DataError("dataset images are " + std::to_string(data.height) + "x" + std::to_string(data.width) +
                    ", model input is " + std::to_string(model.input));
  }
}

void append(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

void write_text(const fs::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

template <typename T>
TrainSummary train_impl(const RunConfig& run, const Dataset& data, const fs::path& out,
                        const std::optional<fs::path>& resume, std::ostream& progress) {
  check_extent(run.model, data);
  fs::create_directories(out);
  Trainer<T> trainer(run.model, run.train);
  if (resume) restore(trainer, load_checkpoint(*resume));
  write_text(out / RunFiles::kConfig, format_key_values(to_key_values(run)));

  const fs::path metrics_path = out / RunFiles::kMetrics;
  const fs::path origins_path = out / RunFiles::kOrigins;
  const bool has_rays = !trainer.model().ray_fields().empty();
  const bool fresh = !resume;
  if (fresh || !fs::exists(metrics_path)) write_text(metrics_path, metrics_header() + "\n");
  if (has_rays && (fresh || !fs::exists(origins_path))) {
    write_text(origins_path, origin_csv_header() + "\n" +
                                 origin_csv_lines(origin_rows(trainer.epoch(), trainer.model().ray_fields())));
  }

  TrainSummary summary;
  summary.first_epoch = trainer.epoch();
  const std::size_t total = run.train.epochs;
  while (trainer.epoch() < total) {
    const Metrics m = trainer.run_epoch(data);
    const std::size_t epoch = trainer.epoch();
    summary.history.push_back(m);
    append(metrics_path, metrics_row(epoch, m) + "\n");
    if (has_rays) append(origins_path, origin_csv_lines(origin_rows(epoch, trainer.model().ray_fields())));

    char line[160];
    std::snprintf(line, sizeof line, "epoch %zu/%zu  loss %.4f  top1 %.4f  f1 %.4f  lr %.2e  %.0f img/s", epoch,
                  total, m.loss, m.top1, m.weighted_f1, m.lr, m.images_per_second);
    progress << line << '\n';

    const std::size_t every = run.train.checkpoint_every;
    if (every != 0 && epoch % every == 0 && epoch != total) {
      save_checkpoint(snapshot(trainer), out / RunFiles::periodic(epoch));
    }
  }
  summary.final_checkpoint = out / RunFiles::kFinal;
  save_checkpoint(snapshot(trainer), summary.final_checkpoint);
  return summary;
}

template <typename T>
EvalResult eval_impl(const Checkpoint& ckpt, const Dataset& data) {
  const RunConfig run = run_config_of(ckpt);
  check_extent(run.model, data);
  Trainer<T> trainer(run.model, run.train);
  restore(trainer, ckpt);

  const auto start = std::chrono::steady_clock::now();
  EvalResult r;
  r.epoch = trainer.epoch();
  r.metrics = evaluate(trainer.model(), data);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  r.metrics.images_per_second = seconds > 0.0 ? static_cast<double>(data.size()) / seconds : 0.0;

  const std::size_t step = trainer.optimizer().state().step;
  const std::size_t total = trainer.steps_per_epoch(data.size()) * run.train.epochs;
  if (step > 0) {
    r.metrics.lr = one_cycle_cosine_lr(std::min(step - 1, total), total, run.train.lr, run.train.warmup);
  }
  return r;
}

template <typename T>
std::size_t export_impl(const Checkpoint& ckpt, const fs::path& image_path, const fs::path& out_dir) {
  const RunConfig run = run_config_of(ckpt);
  Trainer<T> trainer(run.model, run.train);
  restore(trainer, ckpt);
  const auto fields = trainer.model().ray_fields();
  if (fields.empty()) throw ValueError("checkpoint has no ray layers (rays = 0); nothing to export");

  const Image image = read_pnm(image_path);
  if (image.height != run.model.input || image.width != run.model.input) {
    throw DataError(image_path.string() + ": image is " + std::to_string(image.height) + "x" +
                    std::to_string(image.width) + ", model input is " + std::to_string(run.model.input));
  }
  const std::vector<float> chw = image_to_chw(image);
  const Tensor<T> batch = Tensor<T>::from(Shape{1, 3, image.height, image.width},
                                          std::vector<T>(chw.begin(), chw.end()));
  std::vector<AttenuationMap<T>> maps;
  {
    NoGradGuard guard;
    trainer.model().forward(batch, &maps);
  }
  fs::create_directories(out_dir);
  std::size_t written = 0;
  for (std::size_t layer = 0; layer < maps.size(); ++layer) written += export_attenuation(maps[layer], layer, out_dir);
  write_text(out_dir / RunFiles::kOrigins,
             origin_csv_header() + "\n" + origin_csv_lines(origin_rows(trainer.epoch(), fields)));
  return written;
}

}  // namespace

std::string RunFiles::periodic(std::size_t epoch) {
  char name[48];
  std::snprintf(name, sizeof name, "checkpoint_epoch%04zu.wrnc", epoch);
  return name;
}

std::optional<std::size_t> TrainSummary::epoch_reaching(double target) const {
  for (std::size_t i = 0; i < history.size(); ++i) {
    if (history[i].top1 >= target) return first_epoch + i + 1;
  }
  return std::nullopt;
}

TrainSummary train_run(const RunConfig& run, const Dataset& data, const fs::path& out,
                       const std::optional<fs::path>& resume, std::ostream& progress) {
  run.model.validate();
  run.train.validate();
  return with_precision(run.train.precision,
                        [&](auto tag) { return train_impl<decltype(tag)>(run, data, out, resume, progress); });
}

EvalResult eval_checkpoint(const Checkpoint& ckpt, const Dataset& data) {
  return with_precision(recorded_precision(ckpt), [&](auto tag) { return eval_impl<decltype(tag)>(ckpt, data); });
}

std::size_t export_maps(const Checkpoint& ckpt, const fs::path& image, const fs::path& out_dir) {
  return with_precision(recorded_precision(ckpt),
                        [&](auto tag) { return export_impl<decltype(tag)>(ckpt, image, out_dir); });
}

std::vector<std::pair<std::size_t, double>> mean_radius_by_epoch(const fs::path& origins_csv) {
  std::ifstream in(origins_csv);
  if (!in) throw DataError("cannot open " + origins_csv.string());
  std::map<std::size_t, std::pair<double, std::size_t>> acc;
  std::string line;
  std::getline(in, line);
  if (line != origin_csv_header()) throw DataError(origins_csv.string() + ": unexpected header");
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::size_t epoch = 0, index = 0;
    double x = 0.0, y = 0.0;
    if (std::sscanf(line.c_str(), "%zu,%zu,%lf,%lf", &epoch, &index, &x, &y) != 4) {
      throw DataError(origins_csv.string() + ":" + std::to_string(line_no) + ": malformed row");
    }
    auto& [sum, count] = acc[epoch];
    sum += std::hypot(x, y);
    ++count;
  }
  std::vector<std::pair<std::size_t, double>> out;
  for (const auto& [epoch, sc] : acc) out.emplace_back(epoch, sc.first / static_cast<double>(sc.second));
  return out;
}

}  // namespace wavray
