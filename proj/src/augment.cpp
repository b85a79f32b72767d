#include "serda/augment.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <sstream>
#include <string>

#include <fftw3.h>

#include "serda/error.hpp"

namespace serda {

void validate_waveform(const Waveform& w) {
  if (w.samples.empty()) throw DataError("waveform is empty");
  if (w.sample_rate <= 0) throw DataError("waveform sample rate must be positive");
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    if (!std::isfinite(w.samples[i])) throw DataError("waveform sample " + std::to_string(i) + " is not finite");
  }
}

double mean_power(const Waveform& w) {
  double acc = 0.0;
  for (double s : w.samples) acc += s * s;
  return w.samples.empty() ? 0.0 : acc / static_cast<double>(w.samples.size());
}

namespace augment {
namespace {

// FFTW's planner is not re-entrant.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

void check_range(double value, double lo, double hi, const char* what) {
  if (!(value >= lo && value <= hi)) {
    std::ostringstream os;
    os << what << " " << value << " outside [" << lo << ", " << hi << "]";
    throw ConfigError(os.str());
  }
}

// White Gaussian noise reshaped so that power falls off as 1/f^exponent.
std::vector<double> colored_noise(std::size_t n, double exponent, KeyedRng& rng) {
  std::vector<double> noise(n);
  for (auto& v : noise) v = rng.normal();
  if (n < 4) return noise;

  const std::size_t bins = n / 2 + 1;
  fftw_complex* spectrum = fftw_alloc_complex(bins);
  fftw_plan forward, inverse;
  {
    std::lock_guard lock(fftw_planner_mutex());
    forward = fftw_plan_dft_r2c_1d(static_cast<int>(n), noise.data(), spectrum, FFTW_ESTIMATE);
    inverse = fftw_plan_dft_c2r_1d(static_cast<int>(n), spectrum, noise.data(), FFTW_ESTIMATE);
  }
  fftw_execute(forward);
  spectrum[0][0] = spectrum[0][1] = 0.0;
  for (std::size_t k = 1; k < bins; ++k) {
    const double amp = std::pow(static_cast<double>(k), -0.5 * exponent);
    spectrum[k][0] *= amp;
    spectrum[k][1] *= amp;
  }
  fftw_execute(inverse);
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(forward);
    fftw_destroy_plan(inverse);
  }
  fftw_free(spectrum);
  return noise;
}

}  // namespace

void AugmentConfig::validate(int sample_rate) const {
  check_range(gain_db_min, -kGainLimitDb, kGainLimitDb, "gain_db_min");
  check_range(gain_db_max, gain_db_min, kGainLimitDb, "gain_db_max");
  check_range(shift_max, 0.0, 0.5, "shift_max");
  const double nyquist = 0.5 * sample_rate;
  check_range(notch_center_min_hz, 1.0, nyquist, "notch_center_min_hz");
  check_range(notch_center_max_hz, notch_center_min_hz, nyquist, "notch_center_max_hz");
  check_range(notch_bandwidth_min, 1e-3, 1.0, "notch_bandwidth_min");
  check_range(notch_bandwidth_max, notch_bandwidth_min, 1.0, "notch_bandwidth_max");
  if (notch_center_max_hz * (1.0 + 0.5 * notch_bandwidth_max) >= nyquist) {
    throw ConfigError("notch band can exceed the Nyquist frequency");
  }
  check_range(snr_db_min, 3.0, 30.0, "snr_db_min");
  check_range(snr_db_max, snr_db_min, 30.0, "snr_db_max");
  check_range(noise_exponent_min, -2.0, 2.0, "noise_exponent_min");
  check_range(noise_exponent_max, noise_exponent_min, 2.0, "noise_exponent_max");
}

Waveform gain(const Waveform& w, double gain_db) {
  check_range(gain_db, -kGainLimitDb, kGainLimitDb, "gain_db");
  Waveform out = w;
  const double factor = std::pow(10.0, gain_db / 20.0);
  for (auto& s : out.samples) s *= factor;
  return out;
}

Waveform polarity_inversion(const Waveform& w) {
  Waveform out = w;
  for (auto& s : out.samples) s = -s;
  return out;
}

Waveform shift(const Waveform& w, double fraction) {
  check_range(fraction, -0.5, 0.5, "shift fraction");
  const auto n = static_cast<long long>(w.size());
  Waveform out = w;
  if (n == 0) return out;
  long long k = std::llround(fraction * static_cast<double>(n)) % n;
  if (k < 0) k += n;
  std::rotate(out.samples.begin(), out.samples.end() - k, out.samples.end());
  return out;
}

Waveform time_inversion(const Waveform& w) {
  Waveform out = w;
  std::reverse(out.samples.begin(), out.samples.end());
  return out;
}

Waveform band_stop_filter(const Waveform& w, double center_hz, double bandwidth_hz) {
  const double nyquist = 0.5 * w.sample_rate;
  if (!(bandwidth_hz > 0.0) || !(center_hz - 0.5 * bandwidth_hz > 0.0) || !(center_hz + 0.5 * bandwidth_hz < nyquist)) {
    std::ostringstream os;
    os << "band-stop band " << center_hz << " Hz +/- " << 0.5 * bandwidth_hz << " Hz outside (0, " << nyquist << ")";
    throw ConfigError(os.str());
  }
  const double w0 = 2.0 * std::numbers::pi * center_hz / w.sample_rate;
  const double q = center_hz / bandwidth_hz;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double cosw = std::cos(w0);
  const double a0 = 1.0 + alpha;
  const double b0 = 1.0 / a0, b1 = -2.0 * cosw / a0, b2 = 1.0 / a0;
  const double a1 = -2.0 * cosw / a0, a2 = (1.0 - alpha) / a0;

  Waveform out = w;
  double x1 = 0.0, x2 = 0.0, y1 = 0.0, y2 = 0.0;
  for (auto& s : out.samples) {
    const double x0 = s;
    const double y0 = b0 * x0 + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = x0;
    y2 = y1;
    y1 = y0;
    s = y0;
  }
  return out;
}

Waveform peak_normalization(const Waveform& w) {
  double peak = 0.0;
  for (double s : w.samples) peak = std::max(peak, std::abs(s));
  Waveform out = w;
  if (peak == 0.0) return out;
  for (auto& s : out.samples) s /= peak;
  return out;
}

Waveform add_colored_noise(const Waveform& w, double snr_db, double spectral_exponent, KeyedRng& rng) {
  check_range(snr_db, 3.0, 30.0, "snr_db");
  check_range(spectral_exponent, -2.0, 2.0, "spectral_exponent");
  const double signal_power = mean_power(w);
  if (!(signal_power > 0.0)) throw DomainError("add_colored_noise: input signal has zero power");

  std::vector<double> noise = colored_noise(w.size(), spectral_exponent, rng);
  double noise_power = 0.0;
  for (double v : noise) noise_power += v * v;
  noise_power /= static_cast<double>(noise.size());
  if (!(noise_power > 0.0)) throw DomainError("add_colored_noise: generated noise has zero power");

  const double target_power = signal_power / std::pow(10.0, snr_db / 10.0);
  const double k = std::sqrt(target_power / noise_power);
  Waveform out = w;
  for (std::size_t i = 0; i < out.samples.size(); ++i) out.samples[i] += k * noise[i];
  return out;
}

std::string_view pipeline_name(int pipeline_id) {
  switch (pipeline_id) {
    case 0:
      return "gain+peak_normalization";
    case 1:
      return "polarity_inversion+shift";
    case 2:
      return "time_inversion+gain";
    case 3:
      return "band_stop_filter+peak_normalization";
    case 4:
      return "colored_noise+peak_normalization";
    default:
      throw ConfigError("pipeline id " + std::to_string(pipeline_id) + " outside [0, 4]");
  }
}

PipelineResult apply_pipeline(const Waveform& w, int pipeline_id, KeyedRng& rng, const AugmentConfig& cfg) {
  pipeline_name(pipeline_id);  // validates the id
  PipelineResult result;
  result.label = pipeline_id;
  switch (pipeline_id) {
    case 0:
      result.wave = peak_normalization(gain(w, rng.uniform(cfg.gain_db_min, cfg.gain_db_max)));
      break;
    case 1:
      result.wave = shift(polarity_inversion(w), rng.uniform(-cfg.shift_max, cfg.shift_max));
      break;
    case 2:
      result.wave = gain(time_inversion(w), rng.uniform(cfg.gain_db_min, cfg.gain_db_max));
      break;
    case 3: {
      const double center = std::exp(rng.uniform(std::log(cfg.notch_center_min_hz), std::log(cfg.notch_center_max_hz)));
      const double bandwidth = center * rng.uniform(cfg.notch_bandwidth_min, cfg.notch_bandwidth_max);
      result.wave = peak_normalization(band_stop_filter(w, center, bandwidth));
      break;
    }
    case 4: {
      const double snr = rng.uniform(cfg.snr_db_min, cfg.snr_db_max);
      const double exponent = rng.uniform(cfg.noise_exponent_min, cfg.noise_exponent_max);
      result.wave = peak_normalization(add_colored_noise(w, snr, exponent, rng));
      break;
    }
  }
  return result;
}

KeyedRng view_rng(std::uint64_t run_seed, std::uint64_t epoch_key, std::size_t origin_index, int view_slot) {
  return KeyedRng{0xa06ULL, run_seed, epoch_key, static_cast<std::uint64_t>(origin_index),
                  static_cast<std::uint64_t>(view_slot)};
}

AugmentedPair make_pair(const Waveform& w, std::size_t origin_index, std::uint64_t run_seed, std::uint64_t epoch_key,
                        const AugmentConfig& cfg) {
  AugmentedPair pair;
  pair.origin_index = origin_index;
  {
    KeyedRng rng = view_rng(run_seed, epoch_key, origin_index, 0);
    const int id = static_cast<int>(rng.below(kNumPipelines));
    auto r = apply_pipeline(w, id, rng, cfg);
    pair.view_a = std::move(r.wave);
    pair.pipeline_label_a = r.label;
  }
  {
    KeyedRng rng = view_rng(run_seed, epoch_key, origin_index, 1);
    const int id = static_cast<int>(rng.below(kNumPipelines));
    auto r = apply_pipeline(w, id, rng, cfg);
    pair.view_b = std::move(r.wave);
    pair.pipeline_label_b = r.label;
  }
  return pair;
}

}  // namespace augment
}  // namespace serda
