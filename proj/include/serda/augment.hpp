#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

#include "serda/rng.hpp"
#include "serda/waveform.hpp"

// Waveform perturbations and the fixed augmentation pipelines whose index is
// the target of the augmentation-classification head.
namespace serda::augment {

inline constexpr int kNumPipelines = 5;
inline constexpr double kGainLimitDb = 12.0;

// Ranges from which the stochastic pipeline parameters are drawn.
struct AugmentConfig {
  double gain_db_min = -12.0;
  double gain_db_max = 12.0;
  double shift_max = 0.5;  // fraction of length, symmetric
  double notch_center_min_hz = 200.0;
  double notch_center_max_hz = 4000.0;  // drawn log-uniformly
  double notch_bandwidth_min = 0.10;    // fraction of centre frequency
  double notch_bandwidth_max = 0.25;
  double snr_db_min = 3.0;
  double snr_db_max = 30.0;
  double noise_exponent_min = -2.0;
  double noise_exponent_max = 2.0;

  void validate(int sample_rate) const;
};

Waveform gain(const Waveform& w, double gain_db);
Waveform polarity_inversion(const Waveform& w);
// Circular shift right by round(fraction * length) samples; |fraction| <= 0.5.
Waveform shift(const Waveform& w, double fraction);
Waveform time_inversion(const Waveform& w);
// Single-pass biquad notch (audio-EQ-cookbook) with Q = center / bandwidth.
Waveform band_stop_filter(const Waveform& w, double center_hz, double bandwidth_hz);
Waveform peak_normalization(const Waveform& w);
// Adds Gaussian noise with power spectrum ~ 1/f^exponent at the requested SNR.
Waveform add_colored_noise(const Waveform& w, double snr_db, double spectral_exponent, KeyedRng& rng);

std::string_view pipeline_name(int pipeline_id);

struct PipelineResult {
  Waveform wave;
  int label = 0;
};

//   0: gain -> peak normalization
//   1: polarity inversion -> shift
//   2: time inversion -> gain
//   3: band-stop filter -> peak normalization
//   4: colored noise -> peak normalization
PipelineResult apply_pipeline(const Waveform& w, int pipeline_id, KeyedRng& rng, const AugmentConfig& cfg = {});

struct AugmentedPair {
  Waveform view_a;
  Waveform view_b;
  int pipeline_label_a = 0;
  int pipeline_label_b = 0;
  std::size_t origin_index = 0;
};

// Stream key for one view of one sample occurrence. `epoch_key` separates
// repeated draws of the same sample across epochs.
KeyedRng view_rng(std::uint64_t run_seed, std::uint64_t epoch_key, std::size_t origin_index, int view_slot);

// Both pipeline ids are drawn uniformly and independently, each from its own
// view stream.
AugmentedPair make_pair(const Waveform& w, std::size_t origin_index, std::uint64_t run_seed, std::uint64_t epoch_key,
                        const AugmentConfig& cfg = {});

}  // namespace serda::augment
