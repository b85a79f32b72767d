#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "serda/augment.hpp"
#include "serda/corpus.hpp"
#include "serda/encoder.hpp"
#include "serda/trainer.hpp"

namespace serda {

struct DataConfig {
  std::string manifest;  // empty: use the synthetic corpus described by `synth`
  double source_train = 0.9;
  double target_train_labeled = 0.05;
  double target_train_unlabeled = 0.3;
  std::uint64_t split_seed = 7;

  SplitRatios ratios(bool target_labeled) const;
  void validate() const;
};

struct RunConfig {
  EncoderConfig encoder;
  TrainConfig train;
  augment::AugmentConfig augment;
  SynthSpec synth;
  DataConfig data;
  std::string output_dir;  // empty: $SERDA_OUTPUT_ROOT or ./runs

  void validate() const;
};

struct ConfigKey {
  std::string key;  // dotted, e.g. "train.lr"
  std::string default_value;
  std::string help;
};

// Every accepted key with its default, in file order.
std::vector<ConfigKey> config_keys();
std::string config_help();

// Nested JSON object holding every key.
nlohmann::ordered_json to_json(const RunConfig& c);
// Starts from `base` and applies the keys present in `j`; unknown keys and
// mistyped values raise ConfigError naming the key.
RunConfig from_json(const nlohmann::json& j, const RunConfig& base = {});
RunConfig load_config(const std::filesystem::path& path);
// `key=value`; the value is parsed as JSON, falling back to a plain string.
void apply_override(RunConfig& c, std::string_view assignment);

// Dotted keys whose values differ.
std::vector<std::string> config_diff(const RunConfig& a, const RunConfig& b);

std::filesystem::path default_output_root();

}  // namespace serda
