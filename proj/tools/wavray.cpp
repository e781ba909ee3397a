#include <CLI11.hpp>

#include <cstdio>
#include <deque>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "wavray/checkpoint.hpp"
#include "wavray/config.hpp"
#include "wavray/data.hpp"
#include "wavray/gradcheck.hpp"
#include "wavray/model.hpp"
#include "wavray/workflow.hpp"

namespace {

using namespace wavray;

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kDiverged = 2;
constexpr int kVerifyFailed = 3;

/// Flags that map one-to-one onto config keys. Values stay strings so the
/// config parser validates file and flag input the same way.
struct KeyFlags {
  std::vector<std::pair<std::string, CLI::Option*>> options;
  std::deque<std::string> values;  // stable addresses for CLI11

  void add(CLI::App& app, const std::string& flag, const std::string& key, const std::string& help) {
    values.emplace_back();
    options.emplace_back(key, app.add_option(flag, values.back(), help));
  }

  void apply(KeyValues& kv) const {
    for (std::size_t i = 0; i < options.size(); ++i) {
      if (options[i].second->count() > 0) kv[options[i].first] = values[i];
    }
  }
};

RunConfig resolve(const std::string& config_path, const KeyFlags& flags) {
  KeyValues kv;
  if (!config_path.empty()) kv = read_key_values(config_path);
  flags.apply(kv);
  RunConfig run;
  apply_key_values(run, kv);
  return run;
}

void print_metrics(std::size_t epoch, const Metrics& m) {
  std::cout << metrics_header() << '\n' << metrics_row(epoch, m) << '\n';
}

int cmd_gradcheck(const std::string& scope, std::uint64_t seed) {
  std::vector<GradScope> scopes;
  if (scope == "all") {
    scopes = {GradScope::kOp, GradScope::kBlock, GradScope::kModel};
  } else {
    scopes = {parse_grad_scope(scope)};
  }
  bool ok = true;
  std::printf("%-24s %14s %8s  %s\n", "probe", "max_rel_error", "draws", "status");
  for (GradScope s : scopes) {
    for (const auto& probe : probes_for(s)) {
      const ProbeReport r = finite_diff_check(probe, seed);
      std::printf("%-24s %14.3e %8zu  %s\n", r.name.c_str(), r.max_rel_error, r.attempts, r.passed ? "ok" : "FAIL");
      if (!r.passed) {
        ok = false;
        for (const auto& e : r.inputs) std::printf("    %-20s %14.3e\n", e.input.c_str(), e.max_rel_error);
      }
    }
  }
  std::fflush(stdout);
  return ok ? kOk : kVerifyFailed;
}

void print_params(const ModelConfig& config) {
  const ParamReport report = param_count(config);
  std::printf("%-28s %14s\n", "module", "scalars");
  for (const auto& [name, count] : report.groups) std::printf("%-28s %14zu\n", name.c_str(), count);
  std::printf("%-28s %14zu  (%.2fM)\n", "total", report.total, static_cast<double>(report.total) / 1e6);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Wavelet backbone and ray encoder: training, evaluation and checks"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "Train a classifier and log metrics, checkpoints and origins");
  std::string train_config, train_data, train_out, train_resume;
  KeyFlags train_flags;
  train->add_option("--config", train_config, "key = value config file");
  train->add_option("--data", train_data, "dataset manifest (path,label CSV)")->required();
  train->add_option("--out", train_out, "output directory")->required();
  train->add_option("--resume", train_resume, "continue from this checkpoint");
  train_flags.add(*train, "--seed", "seed", "random seed");
  train_flags.add(*train, "--rays", "rays", "total ray layers (0-3)");
  train_flags.add(*train, "--epochs", "epochs", "epoch count");
  train_flags.add(*train, "--batch", "batch", "batch size");
  train_flags.add(*train, "--lr", "lr", "peak learning rate");
  train_flags.add(*train, "--weight-decay", "weight_decay", "decoupled weight decay");
  train_flags.add(*train, "--warmup", "warmup", "warmup fraction of all steps");
  train_flags.add(*train, "--precision", "precision", "float32 or float64");
  train_flags.add(*train, "--checkpoint-every", "checkpoint_every", "epochs between checkpoints (0: final only)");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  std::string eval_ckpt, eval_data;
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--data", eval_data, "dataset manifest")->required();

  // gradcheck
  auto* grad = app.add_subcommand("gradcheck", "Compare analytic gradients with central differences");
  std::string grad_scope = "all";
  std::uint64_t grad_seed = 0;
  grad->add_option("--scope", grad_scope, "op, block, model or all")->capture_default_str();
  grad->add_option("--seed", grad_seed, "probe seed")->capture_default_str();

  // export-maps
  auto* exp = app.add_subcommand("export-maps", "Write attenuation maps and origins of a checkpoint");
  std::string exp_ckpt, exp_image, exp_out;
  exp->add_option("--checkpoint", exp_ckpt, "checkpoint file")->required();
  exp->add_option("--image", exp_image, "PPM or PGM image at the model's input extent")->required();
  exp->add_option("--out", exp_out, "output directory")->required();

  // param-count
  auto* params = app.add_subcommand("param-count", "Learnable scalars per module");
  std::string params_config;
  bool params_table1 = false;
  std::optional<std::size_t> params_rays;
  params->add_option("--config", params_config, "key = value config file");
  params->add_flag("--table1", params_table1, "full-size 224x224 configuration");
  params->add_option("--rays", params_rays, "total ray layers (0-3)");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic shapes dataset");
  SyntheticSpec spec;
  std::string synth_out, placement = "center";
  synth->add_option("--classes", spec.classes, "class count")->capture_default_str();
  synth->add_option("--per-class", spec.per_class, "images per class")->capture_default_str();
  synth->add_option("--extent", spec.extent, "image side in pixels")->capture_default_str();
  synth->add_option("--placement", placement, "center or uniform")->capture_default_str();
  synth->add_option("--noise", spec.noise, "uniform noise amplitude")->capture_default_str();
  synth->add_option("--seed", spec.seed, "random seed")->capture_default_str();
  synth->add_option("--out", synth_out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*train) {
      const RunConfig run = resolve(train_config, train_flags);
      const Dataset data = load_dataset(train_data, run.model.classes);
      std::optional<std::filesystem::path> resume;
      if (!train_resume.empty()) resume = train_resume;
      const TrainSummary summary = train_run(run, data, train_out, resume, std::cerr);
      if (!summary.history.empty()) {
        std::cout << metrics_row(summary.first_epoch + summary.history.size(), summary.history.back()) << '\n';
      }
      std::cerr << "final checkpoint: " << summary.final_checkpoint.string() << '\n';
    } else if (*eval) {
      const Checkpoint ckpt = load_checkpoint(eval_ckpt);
      const Dataset data = load_dataset(eval_data, run_config_of(ckpt).model.classes);
      const EvalResult r = eval_checkpoint(ckpt, data);
      print_metrics(r.epoch, r.metrics);
    } else if (*grad) {
      return cmd_gradcheck(grad_scope, grad_seed);
    } else if (*exp) {
      const std::size_t files = export_maps(load_checkpoint(exp_ckpt), exp_image, exp_out);
      std::cout << files << " maps written to " << exp_out << '\n';
    } else if (*params) {
      ModelConfig config;
      if (params_table1) {
        config = ModelConfig::table1(params_rays.value_or(0));
      } else {
        KeyFlags none;
        config = resolve(params_config, none).model;
        if (params_rays) config.rays = *params_rays;
      }
      config.validate();
      print_params(config);
    } else if (*synth) {
      if (placement == "center") {
        spec.placement = Placement::kCenterBiased;
      } else if (placement == "uniform") {
        spec.placement = Placement::kUniform;
      } else {
        throw ValueError("placement must be center or uniform, got '" + placement + "'");
      }
      const auto manifest = synth_generate(spec, synth_out);
      std::cout << spec.classes * spec.per_class << " images, manifest " << manifest.string() << '\n';
    }
  } catch (const DivergenceError& e) {
    std::cerr << "error: diverged: " << e.what() << '\n';
    return kDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kOk;
}
