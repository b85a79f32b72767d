#include "serda/config.hpp"

#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>
#include <type_traits>

#include "serda/error.hpp"

namespace serda {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// Calls f(key, field, help) for every configurable field. Cfg is RunConfig or
// const RunConfig.
template <typename Cfg, typename F>
void visit_fields(Cfg& c, F&& f) {
  f("encoder.conv_layers", c.encoder.conv_layers, "conv stack, [[channels, kernel, stride], ...]");
  f("encoder.model_dim", c.encoder.model_dim, "transformer width (h dimension)");
  f("encoder.num_transformer_layers", c.encoder.num_transformer_layers, "transformer layers");
  f("encoder.num_heads", c.encoder.num_heads, "attention heads; must divide model_dim");
  f("encoder.ffn_dim", c.encoder.ffn_dim, "feed-forward hidden width");
  f("encoder.proj_hidden", c.encoder.proj_hidden, "projection head hidden width");
  f("encoder.proj_out", c.encoder.proj_out, "contrastive embedding width");
  f("encoder.num_emotion_classes", c.encoder.num_emotion_classes, "emotion classes");

  f("train.lambda_aug", c.train.lambdas.aug, "weight of the augmentation-classification loss");
  f("train.lambda_cont", c.train.lambdas.cont, "weight of the contrastive loss");
  f("train.lambda_im", c.train.lambdas.im, "weight of the information-maximisation loss");
  f("train.lr", c.train.lr, "initial Adam learning rate");
  f("train.lr_decay_factor", c.train.lr_decay_factor, "plateau decay factor");
  f("train.lr_patience", c.train.lr_patience, "non-improving validations tolerated before a decay");
  f("train.source_epoch_batches", c.train.source_epoch_batches, "steps per source epoch (and label-free target epoch)");
  f("train.target_epoch_batches", c.train.target_epoch_batches, "steps per labeled target epoch");
  f("train.early_stop_patience", c.train.early_stop_patience, "non-improving epoch pairs before stopping");
  f("train.batch_size", c.train.batch_size, "samples per batch (two views each)");
  f("train.tau", c.train.nce.tau, "contrastive temperature");
  f("train.nce_symmetric", c.train.nce.symmetric, "average both contrastive directions");
  f("train.nce_denominator", c.train.nce.denominator, "cross_view or all_views");
  f("train.seed", c.train.seed, "initialisation, shuffling and augmentation seed");
  f("train.target_labeled", c.train.target_labeled, "use target emotion labels");
  f("train.source_only", c.train.source_only, "skip target epochs");
  f("train.max_epoch_pairs", c.train.max_epoch_pairs, "safety cap on epoch pairs");
  f("train.adam_beta1", c.train.adam_beta1, "Adam first-moment decay");
  f("train.adam_beta2", c.train.adam_beta2, "Adam second-moment decay");
  f("train.adam_eps", c.train.adam_eps, "Adam denominator epsilon");

  f("augment.gain_db_min", c.augment.gain_db_min, "gain range low (dB)");
  f("augment.gain_db_max", c.augment.gain_db_max, "gain range high (dB)");
  f("augment.shift_max", c.augment.shift_max, "max circular shift, fraction of length");
  f("augment.notch_center_min_hz", c.augment.notch_center_min_hz, "notch centre low (Hz)");
  f("augment.notch_center_max_hz", c.augment.notch_center_max_hz, "notch centre high (Hz)");
  f("augment.notch_bandwidth_min", c.augment.notch_bandwidth_min, "notch bandwidth low, fraction of centre");
  f("augment.notch_bandwidth_max", c.augment.notch_bandwidth_max, "notch bandwidth high, fraction of centre");
  f("augment.snr_db_min", c.augment.snr_db_min, "noise SNR low (dB)");
  f("augment.snr_db_max", c.augment.snr_db_max, "noise SNR high (dB)");
  f("augment.noise_exponent_min", c.augment.noise_exponent_min, "noise spectral exponent low");
  f("augment.noise_exponent_max", c.augment.noise_exponent_max, "noise spectral exponent high");

  f("synth.num_samples_per_domain", c.synth.num_samples_per_domain, "clips per domain");
  for (auto [name, prof] : {std::pair{"negative", &c.synth.negative}, std::pair{"positive", &c.synth.positive}}) {
    const std::string pre = std::string("synth.") + name + ".";
    f(pre + "f0_min_hz", prof->f0_min_hz, "fundamental low (Hz)");
    f(pre + "f0_max_hz", prof->f0_max_hz, "fundamental high (Hz)");
    f(pre + "mod_rate_min_hz", prof->mod_rate_min_hz, "amplitude-modulation rate low (Hz)");
    f(pre + "mod_rate_max_hz", prof->mod_rate_max_hz, "amplitude-modulation rate high (Hz)");
    f(pre + "tilt_db_per_harmonic", prof->tilt_db_per_harmonic, "harmonic level slope (dB per harmonic)");
  }
  f("synth.num_harmonics", c.synth.num_harmonics, "harmonics per clip");
  f("synth.duration_min_s", c.synth.duration_min_s, "clip duration low (s)");
  f("synth.duration_max_s", c.synth.duration_max_s, "clip duration high (s)");
  f("synth.sample_rate", c.synth.sample_rate, "sample rate (Hz)");
  for (auto [name, sh] : {std::pair{"source_shift", &c.synth.source_shift}, std::pair{"target_shift", &c.synth.target_shift}}) {
    const std::string pre = std::string("synth.") + name + ".";
    f(pre + "pitch_offset_hz", sh->pitch_offset_hz, "added to every fundamental (Hz)");
    f(pre + "channel_lowpass_hz", sh->channel_lowpass_hz, "channel low-pass cutoff, 0 = none (Hz)");
    f(pre + "noise_floor", sh->noise_floor, "additive white noise std");
  }
  f("synth.seed", c.synth.seed, "generator seed");

  f("data.manifest", c.data.manifest, "manifest CSV; empty = synthetic corpus");
  f("data.source_train", c.data.source_train, "source train fraction (rest is validation)");
  f("data.target_train_labeled", c.data.target_train_labeled, "target train fraction, labeled mode");
  f("data.target_train_unlabeled", c.data.target_train_unlabeled, "target train fraction, label-free mode");
  f("data.split_seed", c.data.split_seed, "split shuffle seed");

  f("output_dir", c.output_dir, "output directory; empty = $SERDA_OUTPUT_ROOT or ./runs");
}

void set_path(ordered_json& root, const std::string& dotted, ordered_json value) {
  ordered_json* node = &root;
  std::size_t start = 0;
  for (std::size_t dot; (dot = dotted.find('.', start)) != std::string::npos; start = dot + 1) {
    node = &(*node)[dotted.substr(start, dot - start)];
  }
  (*node)[dotted.substr(start)] = std::move(value);
}

ordered_json encode(const std::vector<ConvLayerSpec>& v) {
  ordered_json a = ordered_json::array();
  for (const auto& c : v) a.push_back({c.channels, c.kernel, c.stride});
  return a;
}
ordered_json encode(losses::NceDenominator d) {
  return d == losses::NceDenominator::CrossView ? "cross_view" : "all_views";
}
template <typename T>
ordered_json encode(const T& v) {
  return ordered_json(v);
}

[[noreturn]] void bad(const std::string& key, const std::string& want, const json& got) {
  throw ConfigError("config key '" + key + "': expected " + want + ", got " + got.dump());
}

template <typename T>
void decode(const std::string& key, const json& j, T& out) {
  if constexpr (std::is_same_v<T, bool>) {
    if (!j.is_boolean()) bad(key, "a boolean", j);
    out = j.get<bool>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!j.is_string()) bad(key, "a string", j);
    out = j.get<std::string>();
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!j.is_number()) bad(key, "a number", j);
    out = j.get<double>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!j.is_number_integer()) bad(key, "an integer", j);
    if constexpr (std::is_unsigned_v<T>) {
      if (!j.is_number_unsigned()) bad(key, "a nonnegative integer", j);
      out = static_cast<T>(j.get<std::uint64_t>());
    } else {
      const auto v = j.get<std::int64_t>();
      if (v < std::numeric_limits<T>::min() || v > std::numeric_limits<T>::max()) bad(key, "a smaller integer", j);
      out = static_cast<T>(v);
    }
  } else if constexpr (std::is_same_v<T, losses::NceDenominator>) {
    if (j == "cross_view") out = losses::NceDenominator::CrossView;
    else if (j == "all_views") out = losses::NceDenominator::AllViews;
    else bad(key, "\"cross_view\" or \"all_views\"", j);
  } else if constexpr (std::is_same_v<T, std::vector<ConvLayerSpec>>) {
    if (!j.is_array()) bad(key, "an array of [channels, kernel, stride]", j);
    std::vector<ConvLayerSpec> v;
    for (const auto& e : j) {
      if (!e.is_array() || e.size() != 3) bad(key, "an array of [channels, kernel, stride]", j);
      ConvLayerSpec c;
      decode(key, e[0], c.channels);
      decode(key, e[1], c.kernel);
      decode(key, e[2], c.stride);
      v.push_back(c);
    }
    out = std::move(v);
  } else {
    static_assert(sizeof(T) == 0, "unhandled config field type");
  }
}

}  // namespace

SplitRatios DataConfig::ratios(bool target_labeled) const {
  SplitRatios r;
  r.source_train = source_train;
  r.source_val = 1.0 - source_train;
  r.target_train = target_labeled ? target_train_labeled : target_train_unlabeled;
  r.target_test = 1.0 - r.target_train;
  return r;
}

void DataConfig::validate() const {
  for (auto [name, v] : {std::pair{"data.source_train", source_train},
                         std::pair{"data.target_train_labeled", target_train_labeled},
                         std::pair{"data.target_train_unlabeled", target_train_unlabeled}}) {
    if (!(v > 0.0 && v < 1.0)) throw ConfigError(std::string(name) + " must lie strictly between 0 and 1");
  }
}

void RunConfig::validate() const {
  encoder.validate();
  train.validate();
  data.validate();
  if (data.manifest.empty()) synth.validate();
  augment.validate(synth.sample_rate);
}

std::vector<ConfigKey> config_keys() {
  std::vector<ConfigKey> keys;
  const RunConfig defaults;
  visit_fields(defaults, [&](const std::string& key, const auto& field, const char* help) {
    keys.push_back({key, encode(field).dump(), help});
  });
  return keys;
}

std::string config_help() {
  std::ostringstream os;
  os << "Config keys (JSON file via --config, or --set key=value):\n";
  std::size_t width = 0;
  const auto keys = config_keys();
  for (const auto& k : keys) width = std::max(width, k.key.size());
  for (const auto& k : keys) {
    os << "  " << k.key << std::string(width + 2 - k.key.size(), ' ') << k.help << " [default " << k.default_value
       << "]\n";
  }
  return os.str();
}

ordered_json to_json(const RunConfig& c) {
  ordered_json j = ordered_json::object();
  visit_fields(c, [&](const std::string& key, const auto& field, const char*) { set_path(j, key, encode(field)); });
  return j;
}

RunConfig from_json(const json& j, const RunConfig& base) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c = base;
  std::vector<std::string> known;
  visit_fields(c, [&](const std::string& key, const auto&, const char*) { known.push_back(key); });

  // Reject anything that is neither a known leaf nor a prefix of one.
  auto check = [&](auto&& self, const json& node, const std::string& prefix) -> void {
    for (const auto& [k, v] : node.items()) {
      const std::string path = prefix.empty() ? k : prefix + "." + k;
      bool leaf = false, group = false;
      for (const auto& key : known) {
        leaf = leaf || key == path;
        group = group || key.starts_with(path + ".");
      }
      if (leaf) continue;
      if (group && v.is_object()) {
        self(self, v, path);
        continue;
      }
      if (group) throw ConfigError("config key '" + path + "' must be an object");
      throw ConfigError("unknown config key '" + path + "'");
    }
  };
  check(check, j, "");

  visit_fields(c, [&](const std::string& key, auto& field, const char*) {
    const json* node = &j;
    std::size_t start = 0;
    for (std::size_t dot; (dot = key.find('.', start)) != std::string::npos; start = dot + 1) {
      auto it = node->find(key.substr(start, dot - start));
      if (it == node->end()) return;
      node = &*it;
    }
    auto it = node->find(key.substr(start));
    if (it != node->end()) decode(key, *it, field);
  });
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

void apply_override(RunConfig& c, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError("override '" + std::string(assignment) + "' is not of the form key=value");
  }
  const std::string key(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  ordered_json value = ordered_json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  ordered_json j = ordered_json::object();
  set_path(j, key, std::move(value));
  c = from_json(json::parse(j.dump()), c);
}

std::vector<std::string> config_diff(const RunConfig& a, const RunConfig& b) {
  std::vector<std::string> va, out;
  visit_fields(a, [&](const std::string&, const auto& field, const char*) { va.push_back(encode(field).dump()); });
  std::size_t i = 0;
  visit_fields(b, [&](const std::string& key, const auto& field, const char*) {
    if (encode(field).dump() != va[i++]) out.push_back(key);
  });
  return out;
}

std::filesystem::path default_output_root() {
  if (const char* env = std::getenv("SERDA_OUTPUT_ROOT"); env && *env) return env;
  return "runs";
}

}  // namespace serda
