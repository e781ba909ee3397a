#include "wavray/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace wavray {

namespace {

std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r')) ++a;
  while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r')) --b;
  return std::string(s.substr(a, b - a));
}

std::size_t parse_count(const std::string& key, const std::string& text) {
  std::size_t v = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

double parse_real(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) throw ConfigError(key + ": expected a number, got '" + text + "'");
  return v;
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = text.find(',', start);
    out.push_back(parse_count(key, trim(std::string_view(text).substr(start, comma - start))));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string format_list(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

KeyValues parse_key_values(std::string_view text, const std::string& origin) {
  KeyValues kv;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    ++line_no;
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
    if (!kv.emplace(key, value).second) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
  }
  return kv;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str(), path.string());
}

std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

const std::vector<std::string>& model_keys() {
  static const std::vector<std::string> keys{"extraction", "refinement", "blocks", "ray_layers_per_stage",
                                             "origins",    "bottleneck", "rays",   "d_model",
                                             "classes",    "input"};
  return keys;
}

const std::vector<std::string>& train_keys() {
  static const std::vector<std::string> keys{"epochs", "batch", "lr", "weight_decay", "warmup",
                                             "seed",   "precision", "checkpoint_every"};
  return keys;
}

KeyValues to_key_values(const ModelConfig& m) {
  return {{"extraction", format_list(m.backbone.extraction)},
          {"refinement", format_list(m.backbone.refinement)},
          {"blocks", std::to_string(m.backbone.blocks_per_stage)},
          {"ray_layers_per_stage", std::to_string(m.backbone.ray_layers_per_stage)},
          {"origins", std::to_string(m.backbone.origins)},
          {"bottleneck", std::to_string(m.backbone.bottleneck)},
          {"rays", std::to_string(m.rays)},
          {"d_model", std::to_string(m.d_model)},
          {"classes", std::to_string(m.classes)},
          {"input", std::to_string(m.input)}};
}

KeyValues to_key_values(const RunConfig& run) {
  KeyValues kv = to_key_values(run.model);
  const TrainConfig& t = run.train;
  kv["epochs"] = std::to_string(t.epochs);
  kv["batch"] = std::to_string(t.batch);
  kv["lr"] = format_real(t.lr);
  kv["weight_decay"] = format_real(t.weight_decay);
  kv["warmup"] = format_real(t.warmup);
  kv["seed"] = std::to_string(t.seed);
  kv["precision"] = precision_name(t.precision);
  kv["checkpoint_every"] = std::to_string(t.checkpoint_every);
  return kv;
}

void apply_key_values(RunConfig& run, const KeyValues& kv) {
  ModelConfig& m = run.model;
  TrainConfig& t = run.train;
  for (const auto& [key, value] : kv) {
    if (key == "extraction") m.backbone.extraction = parse_list(key, value);
    else if (key == "refinement") m.backbone.refinement = parse_list(key, value);
    else if (key == "blocks") m.backbone.blocks_per_stage = parse_count(key, value);
    else if (key == "ray_layers_per_stage") m.backbone.ray_layers_per_stage = parse_count(key, value);
    else if (key == "origins") m.backbone.origins = parse_count(key, value);
    else if (key == "bottleneck") m.backbone.bottleneck = parse_count(key, value);
    else if (key == "rays") m.rays = parse_count(key, value);
    else if (key == "d_model") m.d_model = parse_count(key, value);
    else if (key == "classes") m.classes = parse_count(key, value);
    else if (key == "input") m.input = parse_count(key, value);
    else if (key == "epochs") t.epochs = parse_count(key, value);
    else if (key == "batch") t.batch = parse_count(key, value);
    else if (key == "lr") t.lr = parse_real(key, value);
    else if (key == "weight_decay") t.weight_decay = parse_real(key, value);
    else if (key == "warmup") t.warmup = parse_real(key, value);
    else if (key == "seed") t.seed = parse_count(key, value);
    else if (key == "checkpoint_every") t.checkpoint_every = parse_count(key, value);
    else if (key == "precision") {
      try {
        t.precision = parse_precision(value);
      } catch (const ValueError& e) {
        throw ConfigError(e.what());
      }
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
}

}  // namespace wavray
