#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "wavray/model.hpp"
#include "wavray/train.hpp"

namespace wavray {

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Ordered so formatted output is stable.
using KeyValues = std::map<std::string, std::string>;

/// `key = value` lines; '#' starts a comment; blank lines are ignored.
/// Duplicate keys and lines without '=' are errors naming the line.
KeyValues parse_key_values(std::string_view text, const std::string& origin);
KeyValues read_key_values(const std::filesystem::path& path);
std::string format_key_values(const KeyValues& kv);

struct RunConfig {
  ModelConfig model = ModelConfig::desk(0);
  TrainConfig train;
};

/// Keys describing the architecture; a checkpoint must agree on all of them.
const std::vector<std::string>& model_keys();
const std::vector<std::string>& train_keys();

KeyValues to_key_values(const ModelConfig& model);
KeyValues to_key_values(const RunConfig& run);
/// Applies every entry; unknown keys and unparsable values raise ConfigError.
void apply_key_values(RunConfig& run, const KeyValues& kv);

}  // namespace wavray
