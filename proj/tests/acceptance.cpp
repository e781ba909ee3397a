// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit if any fail.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "support.hpp"
#include "wavray/checkpoint.hpp"
#include "wavray/config.hpp"
#include "wavray/gradcheck.hpp"
#include "wavray/model.hpp"
#include "wavray/optim.hpp"
#include "wavray/wavelet.hpp"
#include "wavray/workflow.hpp"

using namespace wavray;
using namespace testing_support;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
  void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

RunConfig desk_run(std::size_t rays) {
  RunConfig run;
  apply_key_values(run, read_key_values(fs::path(WAVRAY_CONFIGS) / "desk.cfg"));
  run.model.rays = rays;
  return run;
}

// 1. Every probe of every scope within tolerance, in double precision.
Outcome gradient_suite() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::size_t probes = 0;
  for (GradScope scope : {GradScope::kOp, GradScope::kBlock, GradScope::kModel}) {
    for (const auto& probe : probes_for(scope)) {
      const auto r = finite_diff_check(probe, 0);
      ++probes;
      worst = std::max(worst, r.max_rel_error);
      o.require(r.passed && r.max_rel_error < 1e-4, probe.name + " " + fmt("%.2e", r.max_rel_error));
    }
  }
  const double secs = seconds_since(t0);
  o.require(secs < 300.0, "runtime " + fmt("%.0f s", secs));
  o.note(std::to_string(probes) + " probes, worst " + fmt("%.2e", worst));
  return o;
}

// 2. Reference configuration at 224x224.
Outcome shape_conformance() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(0);
  Classifier<float> model(ModelConfig::table1(3), rng);
  NoGradGuard guard;
  const auto pyramid = model.backbone().forward(Tensor<float>::zeros(Shape{1, 3, 224, 224}));
  const auto tokens = model.encoder().tokens(pyramid.deepest());
  o.require(pyramid.extraction.shape() == Shape({1, 64, 28, 28}), "extraction " + pyramid.extraction.shape().str());
  o.require(pyramid.deepest().shape() == Shape({1, 4096, 14, 14}), "refinement " + pyramid.deepest().shape().str());
  o.require(tokens.shape() == Shape({1, 196, 256}), "tokens " + tokens.shape().str());
  const double secs = seconds_since(t0);
  o.require(secs < 60.0, "runtime " + fmt("%.0f s", secs));
  o.note(pyramid.extraction.shape().str() + " -> " + pyramid.deepest().shape().str() + " -> " +
         tokens.shape().str());
  return o;
}

// 3. Parameter totals within 30% of the 9.58M and 10.38M targets.
Outcome parameter_budget() {
  Outcome o;
  const double r0 = static_cast<double>(param_count(ModelConfig::table1(0)).total);
  const double r3 = static_cast<double>(param_count(ModelConfig::table1(3)).total);
  o.require(std::abs(r0 - 9.58e6) <= 0.3 * 9.58e6, "rays 0 out of band");
  o.require(std::abs(r3 - 10.38e6) <= 0.3 * 10.38e6, "rays 3 out of band");
  o.require(r3 > r0, "delta not positive");
  o.note("rays 0 " + fmt("%.2fM", r0 / 1e6) + ", rays 3 " + fmt("%.2fM", r3 / 1e6));
  return o;
}

// 4. Convolution, decomposition and spectral modulation against loop oracles.
Outcome oracle_equivalences() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(4);
  double conv_err = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t groups = 1 + rng.below(3);
    const std::size_t cin = groups * (1 + rng.below(3)), cout = groups * (1 + rng.below(3));
    const std::size_t kh = 1 + rng.below(4), kw = 1 + rng.below(4);
    const std::size_t sh = 1 + rng.below(3), sw = 1 + rng.below(3);
    const std::size_t ph = rng.below(3), pw = rng.below(3);
    const std::size_t h = kh + rng.below(6), w = kw + rng.below(6);
    const auto x = random_tensor({1 + rng.below(2), cin, h, w}, rng);
    const auto k = random_tensor({cout, cin / groups, kh, kw}, rng);
    const auto y = conv2d(x, k, Tensor<double>{}, Conv2dParams{{sh, sw}, {ph, pw}, groups});
    conv_err = std::max(conv_err, max_rel_diff(y.data(), conv_reference(x, k, sh, sw, ph, pw, groups)));
  }
  o.require(conv_err < 1e-6, "conv2d " + fmt("%.2e", conv_err));

  double wave_err = 0.0;
  for (std::size_t stride : {1, 2}) {
    auto f = WaveFilterPair<double>::init();
    for (auto* t : {&f.low, &f.high})
      for (double& v : t->mutable_data()) v += 0.2 * rng.normal();
    const auto x = random_tensor({2, 3, 8, 8}, rng);
    const auto b = wave_decompose(x, f, stride);
    const auto lo = f.low.data(), hi = f.high.data();
    wave_err = std::max({wave_err, max_rel_diff(b.ll.data(), separable_reference(x, lo, lo, stride)),
                         max_rel_diff(b.lh.data(), separable_reference(x, lo, hi, stride)),
                         max_rel_diff(b.hl.data(), separable_reference(x, hi, lo, stride)),
                         max_rel_diff(b.hh.data(), separable_reference(x, hi, hi, stride))});
  }
  o.require(wave_err < 1e-6, "wave_decompose " + fmt("%.2e", wave_err));

  const auto f = random_tensor({1, 4, 8, 8}, rng);
  std::vector<double> m(64);
  for (double& v : m) v = rng.uniform(0.0, 2.0);
  const double spec_err =
      max_rel_diff(spectral_modulate(f, Tensor<double>::from(Shape{8, 8}, m)).data(), circular_modulate_reference(f, m));
  o.require(spec_err < 1e-5, "spectral_modulate " + fmt("%.2e", spec_err));

  const double secs = seconds_since(t0);
  o.require(secs < 120.0, "runtime " + fmt("%.0f s", secs));
  o.note("conv " + fmt("%.1e", conv_err) + ", wavelet " + fmt("%.1e", wave_err) + ", spectral " +
         fmt("%.1e", spec_err));
  return o;
}

// 5. Normalization, unit-circle initialization and quarter-turn symmetry.
Outcome attenuation_invariants() {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(5);
  double worst_sum = 0.0;
  for (int draw = 0; draw < 100; ++draw) {
    auto field = RayField<double>::init(12);
    for (auto* t : {&field.origins, &field.log_sigma, &field.log_alpha, &field.beta})
      for (double& v : t->mutable_data()) v += rng.normal();
    const std::size_t h = 2 + rng.below(15), w = 2 + rng.below(15);
    const auto map = attenuation_map(field, h, w);
    for (std::size_t i = 0; i < 12; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < h * w; ++j) s += map.per_origin[i * h * w + j];
      worst_sum = std::max(worst_sum, std::abs(s - 1.0));
    }
    double s = 0.0;
    for (double v : map.combined.data()) s += v;
    worst_sum = std::max(worst_sum, std::abs(s - 1.0));
  }
  o.require(worst_sum < 1e-6, "map sums off by " + fmt("%.2e", worst_sum));

  const auto field = RayField<double>::init(12);
  double worst_radius = 0.0;
  for (std::size_t k = 0; k < 12; ++k) {
    worst_radius = std::max(worst_radius, std::abs(std::hypot(field.origins[2 * k], field.origins[2 * k + 1]) - 1.0));
  }
  o.require(worst_radius < 1e-6, "origin radius off by " + fmt("%.2e", worst_radius));

  double worst_rot = 0.0;
  for (std::size_t n : {8, 9, 16}) {
    const auto map = attenuation_map(field, n, n);
    const std::size_t hw = n * n;
    for (std::size_t k = 0; k < 12; ++k)
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) {
          const double a = map.per_origin[((k + 3) % 12) * hw + r * n + c];
          const double b = map.per_origin[k * hw + (n - 1 - c) * n + r];
          worst_rot = std::max(worst_rot, std::abs(a - b));
        }
  }
  o.require(worst_rot < 1e-6, "rotation mismatch " + fmt("%.2e", worst_rot));
  const double secs = seconds_since(t0);
  o.require(secs < 60.0, "runtime " + fmt("%.0f s", secs));
  o.note("sum err " + fmt("%.1e", worst_sum) + ", radius err " + fmt("%.1e", worst_radius) + ", rotation err " +
         fmt("%.1e", worst_rot));
  return o;
}

struct DeskRuns {
  TrainSummary rays0, rays3;
  double secs0 = 0.0, secs3 = 0.0;
  fs::path dir3;
};

DeskRuns desk_runs(const Dataset& data) {
  DeskRuns d;
  std::ostringstream quiet;
  auto t0 = std::chrono::steady_clock::now();
  d.rays0 = train_run(desk_run(0), data, scratch_dir("accept_rays0"), std::nullopt, quiet);
  d.secs0 = seconds_since(t0);
  d.dir3 = scratch_dir("accept_rays3");
  t0 = std::chrono::steady_clock::now();
  d.rays3 = train_run(desk_run(3), data, d.dir3, std::nullopt, quiet);
  d.secs3 = seconds_since(t0);
  return d;
}

// 6. Both variants fit the center-biased set; rays 3 gets there no later.
Outcome desk_overfit(const DeskRuns& d) {
  Outcome o;
  const auto e0 = d.rays0.epoch_reaching(0.99), e3 = d.rays3.epoch_reaching(0.99);
  o.require(e0.has_value(), "rays 0 never reached 0.99");
  o.require(e3.has_value(), "rays 3 never reached 0.99");
  if (e0 && e3) o.require(*e3 <= *e0, "rays 3 slower");
  o.require(d.secs0 < 600.0 && d.secs3 < 600.0, "runtime over 10 min");
  o.note("epochs to 0.99: rays 0 " + (e0 ? std::to_string(*e0) : "-") + ", rays 3 " +
         (e3 ? std::to_string(*e3) : "-") + "; final top1 " + fmt("%.4f", d.rays0.history.back().top1) + " / " +
         fmt("%.4f", d.rays3.history.back().top1) + "; " + fmt("%.0f s", d.secs0) + " / " + fmt("%.0f s", d.secs3));
  return o;
}

// 7. Mean origin radius shrinks over the rays-3 run.
Outcome origin_convergence(const DeskRuns& d) {
  Outcome o;
  const auto radii = mean_radius_by_epoch(d.dir3 / RunFiles::kOrigins);
  o.require(radii.size() >= 2, "trajectory too short");
  if (radii.size() < 2) return o;
  const double first = radii.front().second, last = radii.back().second;
  o.require(radii.front().first == 0 && std::abs(first - 1.0) < 1e-6, "initial radius " + fmt("%.6f", first));
  o.require(last < first, "final radius not below initial");
  o.require(last < 0.9 * first, "final radius " + fmt("%.4f", last) + " not below 0.9 x initial");
  o.note("mean radius " + fmt("%.4f", first) + " -> " + fmt("%.4f", last) + " over " +
         std::to_string(radii.back().first) + " epochs");
  return o;
}

// 8. Repeatable runs, exact evaluation round trip, corruption detection.
Outcome determinism_and_persistence(const Dataset& data) {
  Outcome o;
  auto run = desk_run(3);
  run.train.epochs = 3;
  std::ostringstream quiet;
  const auto a = train_run(run, data, scratch_dir("accept_det_a"), std::nullopt, quiet);
  const auto b = train_run(run, data, scratch_dir("accept_det_b"), std::nullopt, quiet);
  const auto bytes = read_file(a.final_checkpoint);
  o.require(bytes == read_file(b.final_checkpoint), "final checkpoints differ");

  const auto r = eval_checkpoint(load_checkpoint(a.final_checkpoint), data);
  const Metrics& logged = a.history.back();
  o.require(r.metrics.loss == logged.loss && r.metrics.top1 == logged.top1 && r.metrics.top5 == logged.top5 &&
                r.metrics.weighted_f1 == logged.weighted_f1 && r.metrics.lr == logged.lr,
            "eval differs from log");

  auto bad = bytes;
  bad[bad.size() / 2] ^= 0x04;
  bool rejected = false;
  try {
    decode_checkpoint(bad, "flipped");
  } catch (const ChecksumError&) {
    rejected = true;
  }
  o.require(rejected, "flipped byte accepted");
  o.note(std::to_string(bytes.size()) + "-byte checkpoints identical, eval loss " + fmt("%.9g", r.metrics.loss));
  return o;
}

// 9. Schedule knots and a two-step optimizer hand calculation.
Outcome schedule_and_optimizer() {
  Outcome o;
  const double peak = 3e-3;
  double worst = 0.0;
  auto check = [&](double got, double want) { worst = std::max(worst, std::abs(got - want)); };
  check(one_cycle_cosine_lr(0, 1000, peak, 0.1), peak / 25.0);
  check(one_cycle_cosine_lr(100, 1000, peak, 0.1), peak);
  check(one_cycle_cosine_lr(1000, 1000, peak, 0.1), peak / 1e4);
  check(one_cycle_cosine_lr(550, 1000, peak, 0.1),
        peak / 1e4 + (peak - peak / 1e4) * (1.0 + std::cos(std::numbers::pi / 2.0)) / 2.0);

  auto p = Tensor<double>::from(Shape{3}, {1.0, -2.0, 0.5});
  p.set_requires_grad(true);
  AdamW<double> opt({{"p", p}}, AdamWHyper{0.9, 0.999, 1e-8, 0.05});
  auto grad_step = [&](std::vector<double> g) {
    p.zero_grad();
    backward(sum(mul(p, Tensor<double>::from(Shape{3}, std::move(g)))));
    opt.step(0.01);
  };
  grad_step({0.1, -0.3, 0.0});
  const double a1 = 0.9995 - 0.01 * 0.1 / (0.1 + 1e-8);
  const double b1 = -2.0 * 0.9995 - 0.01 * -0.3 / (0.3 + 1e-8);
  const double c1 = 0.5 * 0.9995;
  check(p[0], a1);
  check(p[1], b1);
  check(p[2], c1);
  grad_step({0.2, 0.1, -0.4});
  auto upd = [](double m, double v) { return (m / 0.19) / (std::sqrt(v / 0.001999) + 1e-8); };
  check(p[0], a1 * 0.9995 - 0.01 * upd(0.029, 0.00004999));
  check(p[1], b1 * 0.9995 - 0.01 * upd(-0.017, 0.00009991));
  check(p[2], c1 * 0.9995 - 0.01 * upd(-0.04, 0.00016));
  o.require(worst < 1e-12, "max deviation " + fmt("%.2e", worst));
  o.note("max deviation " + fmt("%.1e", worst));
  return o;
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.ok = false;
      o.detail = std::string("exception: ") + e.what();
    }
    failures += o.ok ? 0 : 1;
    std::printf("%s  [%d] %-28s %s (%.1f s)\n", o.ok ? "PASS" : "FAIL", id, name, o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  };

  report(1, "gradient suite", gradient_suite);
  report(2, "shape conformance", shape_conformance);
  report(3, "parameter budget", parameter_budget);
  report(4, "oracle equivalences", oracle_equivalences);
  report(5, "attenuation invariants", attenuation_invariants);

  SyntheticSpec spec;  // 3 classes x 64 center-biased 32x32 images
  const Dataset data = load_dataset(synth_generate(spec, scratch_dir("accept_data")), 3);
  DeskRuns runs;
  bool trained = false;
  report(6, "desk overfit", [&] {
    runs = desk_runs(data);
    trained = true;
    return desk_overfit(runs);
  });
  report(7, "origin convergence", [&] {
    if (!trained) return Outcome{false, "desk runs did not complete"};
    return origin_convergence(runs);
  });
  report(8, "determinism and persistence", [&] { return determinism_and_persistence(data); });
  report(9, "schedule and optimizer", schedule_and_optimizer);

  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
