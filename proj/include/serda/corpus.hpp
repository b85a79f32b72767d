#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "serda/waveform.hpp"

namespace serda {

enum class Domain { Source, Target };
enum class Split { Unassigned, Train, Val, Test };

std::string_view to_string(Domain d);
std::string_view to_string(Split s);
Domain parse_domain(std::string_view s);
Split parse_split(std::string_view s);

inline constexpr int kUnlabeled = -1;
inline constexpr std::string_view kSynthScheme = "synth://";

struct ManifestRow {
  std::string path;  // file path relative to the manifest, or synth://<class>/<index>
  int emotion = kUnlabeled;
  Domain domain = Domain::Source;
  Split split = Split::Unassigned;
  friend bool operator==(const ManifestRow&, const ManifestRow&) = default;
};

// CSV with header `path,emotion,domain,split`, optionally preceded by a
// `# sample_rate=<hz>,num_classes=<c>` line. An empty emotion cell means
// unlabeled; an empty split cell means not yet assigned.
struct Manifest {
  int sample_rate = kDefaultSampleRate;
  int num_classes = 2;
  std::vector<ManifestRow> rows;
  friend bool operator==(const Manifest&, const Manifest&) = default;
};

Manifest parse_manifest(std::string_view text);
std::string format_manifest(const Manifest& m);
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& m);

// ---- synthetic two-domain corpus --------------------------------------------

struct ClassProfile {
  double f0_min_hz = 0.0;
  double f0_max_hz = 0.0;
  double mod_rate_min_hz = 0.0;  // amplitude-modulation rate
  double mod_rate_max_hz = 0.0;
  double tilt_db_per_harmonic = 0.0;
  friend bool operator==(const ClassProfile&, const ClassProfile&) = default;
};

struct DomainShift {
  double pitch_offset_hz = 0.0;
  double channel_lowpass_hz = 0.0;  // 0 disables the channel filter
  double noise_floor = 0.0;         // std of additive white noise
  friend bool operator==(const DomainShift&, const DomainShift&) = default;
};

// Class 0 ("negative") is low, slowly modulated and dark; class 1 ("positive")
// is higher, faster modulated and brighter. The target domain adds a pitch
// offset, a low-pass channel and a noise floor on top. The default +80 Hz
// lands target negatives on the source positives' pitch range, so a
// pitch-only decision rule transfers badly.
struct SynthSpec {
  std::size_t num_samples_per_domain = 200;
  ClassProfile negative{130.0, 190.0, 1.5, 3.5, -6.0};
  ClassProfile positive{210.0, 270.0, 5.0, 8.0, -3.0};
  std::size_t num_harmonics = 8;
  double duration_min_s = 1.0;
  double duration_max_s = 1.0;
  int sample_rate = kDefaultSampleRate;
  DomainShift source_shift{};
  DomainShift target_shift{80.0, 1500.0, 0.02};
  std::uint64_t seed = 2024;

  void validate() const;
  const ClassProfile& profile(int emotion) const { return emotion == 1 ? positive : negative; }
  const DomainShift& shift(Domain d) const { return d == Domain::Source ? source_shift : target_shift; }
  friend bool operator==(const SynthSpec&, const SynthSpec&) = default;
};

// Per-sample random draw, independent of any domain shift.
struct SynthDraw {
  int emotion = 0;
  double f0_hz = 0.0;
  double mod_rate_hz = 0.0;
  double mod_depth = 0.0;
  double mod_phase = 0.0;
  double tilt_db = 0.0;
  double amplitude = 0.0;
  double vibrato_hz = 0.0;
  std::vector<double> harmonic_phases;
  std::size_t length = 0;
  std::uint64_t noise_key = 0;
};

SynthDraw draw_synthetic(const SynthSpec& spec, Domain domain, int emotion, std::size_t index);
Waveform render_synthetic(const SynthSpec& spec, const SynthDraw& draw, const DomainShift& shift);
Waveform synth_sample(const SynthSpec& spec, Domain domain, int emotion, std::size_t index);
std::string synth_path(int emotion, std::size_t index);

// Manifest rows plus decoded audio, index-aligned.
struct Corpus {
  Manifest manifest;
  std::vector<Waveform> waves;

  std::size_t size() const { return waves.size(); }
  std::vector<std::size_t> indices(Domain domain, Split split) const;
};

// num_samples_per_domain rows per domain, classes alternating; splits unassigned.
Corpus generate_synthetic(const SynthSpec& spec);

// Decodes every row: synth:// rows are regenerated from `spec`, other paths
// are read as WAV relative to `base_dir`.
Corpus load_corpus(const Manifest& manifest, const std::filesystem::path& base_dir, const SynthSpec& spec);

// ---- splitting and batching -------------------------------------------------

// Fraction of each domain assigned to its training split; the remainder goes
// to validation (source) or test (target).
struct SplitRatios {
  double source_train = 0.9;
  double source_val = 0.1;
  double target_train = 0.05;
  double target_test = 0.95;
  void validate() const;
  friend bool operator==(const SplitRatios&, const SplitRatios&) = default;
};

// Stratified by emotion within each domain (largest-remainder allocation),
// shuffled deterministically from `seed`. Rows with a split already set are
// kept as they are.
Manifest split(const Manifest& manifest, const SplitRatios& ratios, std::uint64_t seed);

class Batch {
 public:
  Batch(Domain domain, std::vector<std::size_t> samples, std::vector<std::uint64_t> aug_keys,
        std::optional<std::vector<int>> labels);

  Domain domain() const { return domain_; }
  std::size_t size() const { return samples_.size(); }
  std::span<const std::size_t> samples() const { return samples_; }
  // Keys separating repeated draws of a sample; feed augment::make_pair.
  std::span<const std::uint64_t> aug_keys() const { return aug_keys_; }
  bool labels_available() const { return labels_.has_value(); }
  // DataError when the batch was drawn without labels.
  std::span<const int> emotion_labels() const;

 private:
  Domain domain_;
  std::vector<std::size_t> samples_;
  std::vector<std::uint64_t> aug_keys_;
  std::optional<std::vector<int>> labels_;
};

// One epoch of `num_batches` batches from (domain, split). The split is
// reshuffled per (seed, epoch_index) and cycled when it holds fewer than
// num_batches * batch_size samples; labels are read only if `expose_labels`.
std::vector<Batch> batch_iter(const Corpus& corpus, Domain domain, Split split, std::size_t batch_size,
                              std::size_t num_batches, std::uint64_t seed, std::uint64_t epoch_index,
                              bool expose_labels);

}  // namespace serda
