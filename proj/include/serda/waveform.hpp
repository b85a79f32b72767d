#pragma once

#include <cstddef>
#include <vector>

namespace serda {

inline constexpr int kDefaultSampleRate = 16000;

// Mono audio buffer. Samples are nominally in [-1, 1]; transforms other than
// peak normalisation do not clip.
struct Waveform {
  std::vector<double> samples;
  int sample_rate = kDefaultSampleRate;

  std::size_t size() const { return samples.size(); }
  friend bool operator==(const Waveform&, const Waveform&) = default;
};

// Throws DataError when empty or non-finite.
void validate_waveform(const Waveform& w);

double mean_power(const Waveform& w);

}  // namespace serda
