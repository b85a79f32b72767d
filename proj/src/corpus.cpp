#include "serda/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "serda/error.hpp"
#include "serda/rng.hpp"
#include "serda/wav_io.hpp"

namespace serda {

std::string_view to_string(Domain d) { return d == Domain::Source ? "source" : "target"; }

std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train:
      return "train";
    case Split::Val:
      return "val";
    case Split::Test:
      return "test";
    case Split::Unassigned:
      break;
  }
  return "";
}

Domain parse_domain(std::string_view s) {
  if (s == "source") return Domain::Source;
  if (s == "target") return Domain::Target;
  throw FormatError("unknown domain '" + std::string(s) + "' (expected source or target)");
}

Split parse_split(std::string_view s) {
  if (s.empty()) return Split::Unassigned;
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw FormatError("unknown split '" + std::string(s) + "' (expected train, val, test or empty)");
}

// ---- manifest ---------------------------------------------------------------

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

int parse_int(std::string_view s, const std::string& what) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw FormatError(what + ": not an integer '" + std::string(s) + "'");
  return v;
}

}  // namespace

Manifest parse_manifest(std::string_view text) {
  Manifest m;
  bool saw_header = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto eol = text.find('\n', pos);
    std::string_view line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const std::string where = "manifest line " + std::to_string(line_no);
    if (line.front() == '#') {
      for (auto field : split_fields(line.substr(1))) {
        while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
        const auto eq = field.find('=');
        if (eq == std::string_view::npos) continue;
        const auto key = field.substr(0, eq);
        const auto value = field.substr(eq + 1);
        if (key == "sample_rate") m.sample_rate = parse_int(value, where);
        if (key == "num_classes") m.num_classes = parse_int(value, where);
      }
      continue;
    }
    if (!saw_header) {
      if (line != "path,emotion,domain,split") {
        throw FormatError(where + ": expected header 'path,emotion,domain,split'");
      }
      saw_header = true;
      continue;
    }
    const auto fields = split_fields(line);
    if (fields.size() != 4) throw FormatError(where + ": expected 4 fields, got " + std::to_string(fields.size()));
    ManifestRow row;
    row.path = std::string(fields[0]);
    if (row.path.empty()) throw FormatError(where + ": empty path");
    row.emotion = fields[1].empty() ? kUnlabeled : parse_int(fields[1], where + " emotion");
    if (row.emotion != kUnlabeled && (row.emotion < 0 || row.emotion >= m.num_classes)) {
      throw DataError(where + ": emotion " + std::to_string(row.emotion) + " outside [0, " +
                      std::to_string(m.num_classes) + ")");
    }
    row.domain = parse_domain(fields[2]);
    row.split = parse_split(fields[3]);
    m.rows.push_back(std::move(row));
  }
  if (!saw_header) throw FormatError("manifest has no header line");
  return m;
}

std::string format_manifest(const Manifest& m) {
  std::ostringstream os;
  os << "# sample_rate=" << m.sample_rate << ",num_classes=" << m.num_classes << "\n";
  os << "path,emotion,domain,split\n";
  for (const auto& r : m.rows) {
    os << r.path << ',';
    if (r.emotion != kUnlabeled) os << r.emotion;
    os << ',' << to_string(r.domain) << ',' << to_string(r.split) << '\n';
  }
  return os.str();
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str());
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write manifest " + path.string());
  os << format_manifest(m);
  if (!os) throw IoError("failed writing manifest " + path.string());
}

// ---- synthetic corpus -------------------------------------------------------

void SynthSpec::validate() const {
  if (num_samples_per_domain < 2) throw ConfigError("synth.num_samples_per_domain must be at least 2");
  if (sample_rate <= 0) throw ConfigError("synth.sample_rate must be positive");
  if (num_harmonics == 0) throw ConfigError("synth.num_harmonics must be positive");
  if (!(duration_min_s > 0.0) || duration_max_s < duration_min_s) {
    throw ConfigError("synth duration range must satisfy 0 < min <= max");
  }
  for (const ClassProfile* p : {&negative, &positive}) {
    if (!(p->f0_min_hz > 0.0) || p->f0_max_hz < p->f0_min_hz || !(p->mod_rate_min_hz > 0.0) ||
        p->mod_rate_max_hz < p->mod_rate_min_hz) {
      throw ConfigError("synth class profile ranges must be positive and ordered");
    }
  }
  const double nyquist = 0.5 * sample_rate;
  for (const DomainShift* s : {&source_shift, &target_shift}) {
    if (s->noise_floor < 0.0) throw ConfigError("synth noise_floor must be nonnegative");
    if (s->channel_lowpass_hz < 0.0 || s->channel_lowpass_hz >= nyquist) {
      throw ConfigError("synth channel_lowpass_hz must lie in [0, Nyquist)");
    }
    if (std::min(negative.f0_min_hz, positive.f0_min_hz) + s->pitch_offset_hz <= 0.0) {
      throw ConfigError("synth pitch_offset_hz drives f0 nonpositive");
    }
  }
}

SynthDraw draw_synthetic(const SynthSpec& spec, Domain domain, int emotion, std::size_t index) {
  if (emotion != 0 && emotion != 1) throw ConfigError("synthetic corpus has two classes; got " + std::to_string(emotion));
  KeyedRng rng{0x5e7ULL, spec.seed, static_cast<std::uint64_t>(domain), static_cast<std::uint64_t>(emotion), index};
  const ClassProfile& p = spec.profile(emotion);
  SynthDraw d;
  d.emotion = emotion;
  d.f0_hz = rng.uniform(p.f0_min_hz, p.f0_max_hz);
  d.mod_rate_hz = rng.uniform(p.mod_rate_min_hz, p.mod_rate_max_hz);
  d.mod_depth = rng.uniform(0.4, 0.8);
  d.mod_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  d.tilt_db = p.tilt_db_per_harmonic + rng.uniform(-1.0, 1.0);
  d.amplitude = rng.uniform(0.3, 0.8);
  d.vibrato_hz = rng.uniform(3.0, 6.0);
  d.harmonic_phases.resize(spec.num_harmonics);
  for (auto& ph : d.harmonic_phases) ph = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double seconds = rng.uniform(spec.duration_min_s, spec.duration_max_s);
  d.length = static_cast<std::size_t>(std::llround(seconds * spec.sample_rate));
  d.noise_key = rng.next_u64();
  return d;
}

Waveform render_synthetic(const SynthSpec& spec, const SynthDraw& draw, const DomainShift& shift) {
  const double sr = spec.sample_rate;
  const double nyquist = 0.5 * sr;
  const double f0 = draw.f0_hz + shift.pitch_offset_hz;
  std::vector<double> gains(draw.harmonic_phases.size());
  double gain_sum = 0.0;
  for (std::size_t h = 0; h < gains.size(); ++h) {
    gains[h] = (static_cast<double>(h + 1) * f0 * 1.03 < nyquist) ? std::pow(10.0, draw.tilt_db * static_cast<double>(h) / 20.0) : 0.0;
    gain_sum += gains[h];
  }

  Waveform w;
  w.sample_rate = spec.sample_rate;
  w.samples.resize(draw.length);
  double phase = 0.0;  // fundamental phase, integrated for the vibrato
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t n = 0; n < draw.length; ++n) {
    const double t = static_cast<double>(n) / sr;
    const double inst_f0 = f0 * (1.0 + 0.02 * std::sin(two_pi * draw.vibrato_hz * t));
    double s = 0.0;
    for (std::size_t h = 0; h < gains.size(); ++h) {
      if (gains[h] != 0.0) s += gains[h] * std::sin(static_cast<double>(h + 1) * phase + draw.harmonic_phases[h]);
    }
    const double env = 1.0 - draw.mod_depth * (0.5 - 0.5 * std::cos(two_pi * draw.mod_rate_hz * t + draw.mod_phase));
    w.samples[n] = draw.amplitude * env * s / gain_sum;
    phase += two_pi * inst_f0 / sr;
  }

  if (shift.channel_lowpass_hz > 0.0) {
    // Second-order Butterworth low-pass (audio-EQ-cookbook, Q = 1/sqrt 2).
    const double w0 = two_pi * shift.channel_lowpass_hz / sr;
    const double alpha = std::sin(w0) / std::numbers::sqrt2;
    const double c = std::cos(w0);
    const double a0 = 1.0 + alpha;
    const double b0 = (1.0 - c) / 2.0 / a0, b1 = (1.0 - c) / a0, b2 = b0;
    const double a1 = -2.0 * c / a0, a2 = (1.0 - alpha) / a0;
    double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
    for (auto& s : w.samples) {
      const double y = b0 * s + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
      x2 = x1;
      x1 = s;
      y2 = y1;
      y1 = y;
      s = y;
    }
  }
  if (shift.noise_floor > 0.0) {
    KeyedRng noise{0x2015eULL, draw.noise_key};
    for (auto& s : w.samples) s += shift.noise_floor * noise.normal();
  }
  return w;
}

Waveform synth_sample(const SynthSpec& spec, Domain domain, int emotion, std::size_t index) {
  return render_synthetic(spec, draw_synthetic(spec, domain, emotion, index), spec.shift(domain));
}

std::string synth_path(int emotion, std::size_t index) {
  return std::string(kSynthScheme) + std::to_string(emotion) + "/" + std::to_string(index);
}

std::vector<std::size_t> Corpus::indices(Domain domain, Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < manifest.rows.size(); ++i) {
    if (manifest.rows[i].domain == domain && manifest.rows[i].split == split) out.push_back(i);
  }
  return out;
}

Corpus generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  Corpus c;
  c.manifest.sample_rate = spec.sample_rate;
  c.manifest.num_classes = 2;
  for (Domain d : {Domain::Source, Domain::Target}) {
    for (std::size_t i = 0; i < spec.num_samples_per_domain; ++i) {
      const int emotion = static_cast<int>(i % 2);
      c.manifest.rows.push_back({synth_path(emotion, i), emotion, d, Split::Unassigned});
      c.waves.push_back(synth_sample(spec, d, emotion, i));
    }
  }
  return c;
}

Corpus load_corpus(const Manifest& manifest, const std::filesystem::path& base_dir, const SynthSpec& spec) {
  Corpus c;
  c.manifest = manifest;
  c.waves.reserve(manifest.rows.size());
  for (const auto& row : manifest.rows) {
    if (row.path.starts_with(kSynthScheme)) {
      const std::string_view rest = std::string_view(row.path).substr(kSynthScheme.size());
      const auto slash = rest.find('/');
      if (slash == std::string_view::npos) throw FormatError("malformed synthetic path " + row.path);
      const int emotion = parse_int(rest.substr(0, slash), row.path);
      const int index = parse_int(rest.substr(slash + 1), row.path);
      if (index < 0) throw FormatError("malformed synthetic path " + row.path);
      c.waves.push_back(synth_sample(spec, row.domain, emotion, static_cast<std::size_t>(index)));
    } else {
      std::filesystem::path p(row.path);
      if (p.is_relative()) p = base_dir / p;
      c.waves.push_back(wav::load(p, manifest.sample_rate));
    }
  }
  return c;
}

// ---- splitting --------------------------------------------------------------

void SplitRatios::validate() const {
  auto check = [](double a, double b, const char* domain) {
    if (a < 0.0 || b < 0.0 || std::abs(a + b - 1.0) > 1e-9) {
      throw ConfigError(std::string(domain) + " split ratios must be nonnegative and sum to 1");
    }
  };
  check(source_train, source_val, "source");
  check(target_train, target_test, "target");
}

Manifest split(const Manifest& manifest, const SplitRatios& ratios, std::uint64_t seed) {
  ratios.validate();
  Manifest out = manifest;
  for (Domain d : {Domain::Source, Domain::Target}) {
    const double train_ratio = d == Domain::Source ? ratios.source_train : ratios.target_train;
    const Split holdout = d == Domain::Source ? Split::Val : Split::Test;
    std::map<int, std::vector<std::size_t>> strata;
    std::size_t total = 0;
    for (std::size_t i = 0; i < out.rows.size(); ++i) {
      if (out.rows[i].domain == d && out.rows[i].split == Split::Unassigned) {
        strata[out.rows[i].emotion].push_back(i);
        ++total;
      }
    }
    if (total == 0) continue;
    // Largest-remainder allocation of the domain-level train count.
    const auto domain_train = static_cast<std::size_t>(std::llround(train_ratio * static_cast<double>(total)));
    std::vector<std::pair<int, double>> remainders;
    std::map<int, std::size_t> quota;
    std::size_t assigned = 0;
    for (const auto& [label, rows] : strata) {
      const double exact = train_ratio * static_cast<double>(rows.size());
      quota[label] = static_cast<std::size_t>(std::floor(exact));
      assigned += quota[label];
      remainders.emplace_back(label, exact - std::floor(exact));
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    for (std::size_t k = 0; assigned < domain_train && k < remainders.size(); ++k) {
      auto& q = quota[remainders[k].first];
      if (q < strata[remainders[k].first].size()) {
        ++q;
        ++assigned;
      }
    }
    for (auto& [label, rows] : strata) {
      KeyedRng rng{0x5b117ULL, seed, static_cast<std::uint64_t>(d), static_cast<std::uint64_t>(label + 1)};
      for (std::size_t i = rows.size(); i > 1; --i) std::swap(rows[i - 1], rows[rng.below(i)]);
      for (std::size_t k = 0; k < rows.size(); ++k) out.rows[rows[k]].split = k < quota[label] ? Split::Train : holdout;
    }
  }
  return out;
}

// ---- batching ---------------------------------------------------------------

Batch::Batch(Domain domain, std::vector<std::size_t> samples, std::vector<std::uint64_t> aug_keys,
             std::optional<std::vector<int>> labels)
    : domain_(domain), samples_(std::move(samples)), aug_keys_(std::move(aug_keys)), labels_(std::move(labels)) {}

std::span<const int> Batch::emotion_labels() const {
  if (!labels_) {
    throw DataError(std::string("emotion labels are not available for this ") + std::string(to_string(domain_)) +
                    " batch (label-free mode)");
  }
  return *labels_;
}

std::vector<Batch> batch_iter(const Corpus& corpus, Domain domain, Split split, std::size_t batch_size,
                              std::size_t num_batches, std::uint64_t seed, std::uint64_t epoch_index,
                              bool expose_labels) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  const auto pool = corpus.indices(domain, split);
  if (pool.empty()) {
    throw DataError("no samples in " + std::string(to_string(domain)) + "/" + std::string(to_string(split)) + " split");
  }
  const std::size_t needed = batch_size * num_batches;
  std::vector<std::size_t> order;
  std::vector<std::uint64_t> keys;
  order.reserve(needed);
  for (std::uint64_t cycle = 0; order.size() < needed; ++cycle) {
    std::vector<std::size_t> perm = pool;
    KeyedRng rng{0xba7c4ULL, seed, static_cast<std::uint64_t>(domain), epoch_index, cycle};
    for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    const std::uint64_t key = hash_key({static_cast<std::uint64_t>(domain), epoch_index, cycle});
    for (std::size_t i = 0; i < perm.size() && order.size() < needed; ++i) {
      order.push_back(perm[i]);
      keys.push_back(key);
    }
  }

  std::vector<Batch> batches;
  batches.reserve(num_batches);
  for (std::size_t b = 0; b < num_batches; ++b) {
    const auto first = static_cast<std::ptrdiff_t>(b * batch_size);
    const auto last = first + static_cast<std::ptrdiff_t>(batch_size);
    std::vector<std::size_t> samples(order.begin() + first, order.begin() + last);
    std::vector<std::uint64_t> aug_keys(keys.begin() + first, keys.begin() + last);
    std::optional<std::vector<int>> labels;
    if (expose_labels) {
      labels.emplace();
      for (std::size_t s : samples) {
        const int e = corpus.manifest.rows[s].emotion;
        if (e == kUnlabeled) throw DataError("sample " + corpus.manifest.rows[s].path + " has no emotion label");
        labels->push_back(e);
      }
    }
    batches.emplace_back(domain, std::move(samples), std::move(aug_keys), std::move(labels));
  }
  return batches;
}

}  // namespace serda
