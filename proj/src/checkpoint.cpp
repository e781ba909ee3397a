#include "wavray/checkpoint.hpp"

#include <bit>
#include <cstring>

namespace wavray {

namespace {

constexpr char kMagic[4] = {'W', 'R', 'N', 'C'};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void text(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes.insert(bytes.end(), s.begin(), s.end());
  }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, std::size_t end, std::string origin)
      : bytes_(bytes), end_(end), origin_(std::move(origin)) {}

  void need(std::size_t n, const char* what) const {
    if (end_ - pos_ < n) {
      throw TruncationError(origin_ + ": truncated checkpoint while reading " + what);
    }
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::string text(const char* what) {
    const std::uint32_t n = u32(what);
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == end_; }
  std::size_t remaining() const { return end_ - pos_; }
  std::size_t pos() const { return pos_; }
  void seek(std::size_t p) { pos_ = p; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t end_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace

const TensorRecord* Checkpoint::find(const std::string& name) const {
  for (const auto& r : records) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes.insert(w.bytes.end(), kMagic, kMagic + 4);
  w.u32(kCheckpointVersion);
  w.text(format_key_values(ckpt.config));
  for (const auto& r : ckpt.records) {
    std::uint64_t count = 1;
    for (std::uint64_t e : r.shape) count *= e;
    if (count != r.values.size()) throw CheckpointError("checkpoint: record " + r.name + " has a bad payload");
    w.text(r.name);
    w.u32(static_cast<std::uint32_t>(r.shape.size()));
    for (std::uint64_t e : r.shape) w.u64(e);
    for (float v : r.values) w.u32(std::bit_cast<std::uint32_t>(v));
  }
  w.u64(fnv1a(std::span(w.bytes).subspan(8)));
  return std::move(w.bytes);
}

namespace {

Checkpoint parse_body(std::span<const std::uint8_t> bytes, std::size_t body_end, const std::string& origin) {
  Checkpoint ckpt;
  Reader r(bytes, body_end, origin);
  r.seek(8);
  ckpt.config = parse_key_values(r.text("config"), origin + " config");
  while (!r.done()) {
    TensorRecord rec;
    rec.name = r.text("record name");
    const std::uint32_t rank = r.u32("record rank");
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const std::uint64_t e = r.u64("record extent");
      if (e != 0 && count > r.remaining() / e) {
        throw TruncationError(origin + ": truncated checkpoint while reading record " + rec.name);
      }
      rec.shape.push_back(e);
      count *= e;
    }
    r.need(count * 4, "record payload");
    rec.values.resize(count);
    for (auto& v : rec.values) v = std::bit_cast<float>(r.u32("record payload"));
    ckpt.records.push_back(std::move(rec));
  }
  return ckpt;
}

}  // namespace

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& origin) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    if (bytes.size() < 4) throw TruncationError(origin + ": truncated checkpoint (no header)");
    throw CheckpointError(origin + ": not a checkpoint (bad magic)");
  }
  Reader head(bytes, 8, origin);
  head.seek(4);
  const std::uint32_t version = head.u32("version");
  if (version != kCheckpointVersion) {
    throw VersionError(origin + ": checkpoint format version " + std::to_string(version) +
                       ", this build reads version " + std::to_string(kCheckpointVersion) +
                       "; re-export it with a matching build or retrain");
  }
  if (bytes.size() < 16) throw TruncationError(origin + ": truncated checkpoint (no checksum)");
  const std::size_t body_end = bytes.size() - 8;
  Reader tail(bytes, bytes.size(), origin);
  tail.seek(body_end);
  const std::uint64_t stored = tail.u64("checksum");
  if (stored != fnv1a(bytes.subspan(8, body_end - 8))) {
    // A layout that runs out of bytes means the file was cut short.
    try {
      (void)parse_body(bytes, body_end, origin);
    } catch (const TruncationError&) {
      throw;
    } catch (const Error&) {
    }
    throw ChecksumError(origin + ": checksum mismatch, the checkpoint is corrupted");
  }

  return parse_body(bytes, body_end, origin);
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file(path);
  } catch (const DataError& e) {
    throw CheckpointError(e.what());
  }
  return decode_checkpoint(bytes, path.string());
}

RunConfig run_config_of(const Checkpoint& ckpt) {
  KeyValues settings;
  for (const auto& [k, v] : ckpt.config) {
    if (k.rfind("state.", 0) != 0) settings.emplace(k, v);
  }
  RunConfig run;
  apply_key_values(run, settings);
  return run;
}

std::vector<std::string> model_config_differences(const KeyValues& a, const KeyValues& b) {
  std::vector<std::string> out;
  for (const auto& key : model_keys()) {
    const auto ia = a.find(key);
    const auto ib = b.find(key);
    const std::string va = ia == a.end() ? "<missing>" : ia->second;
    const std::string vb = ib == b.end() ? "<missing>" : ib->second;
    if (va != vb) out.push_back(key + ": " + va + " vs " + vb);
  }
  return out;
}

template <typename T>
Checkpoint snapshot(const Trainer<T>& trainer) {
  Checkpoint ckpt;
  ckpt.config = to_key_values(RunConfig{trainer.model_config(), trainer.train_config()});
  ckpt.config["state.epoch"] = std::to_string(trainer.epoch());
  ckpt.config["state.step"] = std::to_string(trainer.optimizer().state().step);
  ckpt.config["state.precision"] = precision_name(trainer.train_config().precision);
  ckpt.config["state.rng"] = trainer.rng().state();

  const auto& params = trainer.optimizer().params();
  const auto& state = trainer.optimizer().state();
  auto record = [](const std::string& name, const Shape& shape, std::span<const T> values) {
    TensorRecord r;
    r.name = name;
    for (std::size_t e : shape.dims()) r.shape.push_back(e);
    r.values.assign(values.begin(), values.end());
    return r;
  };
  for (const auto& p : params) ckpt.records.push_back(record(p.name, p.tensor.shape(), p.tensor.data()));
  for (std::size_t k = 0; k < params.size(); ++k) {
    ckpt.records.push_back(record("adam.m." + params[k].name, params[k].tensor.shape(), state.m[k]));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    ckpt.records.push_back(record("adam.v." + params[k].name, params[k].tensor.shape(), state.v[k]));
  }
  return ckpt;
}

template <typename T>
void restore(Trainer<T>& trainer, const Checkpoint& ckpt) {
  const auto diffs = model_config_differences(ckpt.config, to_key_values(trainer.model_config()));
  if (!diffs.empty()) {
    std::string msg = "checkpoint was written for a different model (checkpoint vs current):";
    for (const auto& d : diffs) msg += "\n  " + d;
    throw ConfigMismatchError(msg);
  }
  auto fetch = [&](const std::string& name, const Shape& shape) -> const TensorRecord& {
    const TensorRecord* r = ckpt.find(name);
    if (!r) throw CheckpointError("checkpoint: missing record " + name);
    std::vector<std::uint64_t> want(shape.dims().begin(), shape.dims().end());
    if (r->shape != want) throw CheckpointError("checkpoint: record " + name + " has the wrong shape");
    return *r;
  };
  auto& opt = trainer.optimizer();
  OptimizerState<T> state;
  for (const auto& p : opt.params()) {
    const TensorRecord& r = fetch(p.name, p.tensor.shape());
    Tensor<T> t = p.tensor;
    auto data = t.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<T>(r.values[i]);
    const TensorRecord& m = fetch("adam.m." + p.name, p.tensor.shape());
    const TensorRecord& v = fetch("adam.v." + p.name, p.tensor.shape());
    state.m.emplace_back(m.values.begin(), m.values.end());
    state.v.emplace_back(v.values.begin(), v.values.end());
  }
  auto get = [&](const std::string& key) {
    const auto it = ckpt.config.find(key);
    if (it == ckpt.config.end()) throw CheckpointError("checkpoint: missing " + key);
    return it->second;
  };
  try {
    state.step = std::stoull(get("state.step"));
    trainer.set_epoch(std::stoull(get("state.epoch")));
  } catch (const std::logic_error&) {
    throw CheckpointError("checkpoint: malformed counters");
  }
  opt.set_state(std::move(state));
  trainer.rng().set_state(get("state.rng"));
}

template Checkpoint snapshot(const Trainer<float>&);
template Checkpoint snapshot(const Trainer<double>&);
template void restore(Trainer<float>&, const Checkpoint&);
template void restore(Trainer<double>&, const Checkpoint&);

}  // namespace wavray
