// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.
// `acceptance A1 A8` runs a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <memory>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"
#include "serda/augment.hpp"
#include "serda/config.hpp"
#include "serda/experiment.hpp"
#include "serda/losses.hpp"
#include "serda/trainer.hpp"
#include "serda/wav_io.hpp"
#include "support/gradcheck.hpp"
#include "support/loss_oracle.hpp"

using namespace serda;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << std::fixed << v;
  return os.str();
}

std::string sci(double v) {
  std::ostringstream os;
  os.precision(2);
  os << std::scientific << v;
  return os.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

const std::uint64_t kSeeds[] = {1, 2, 3, 4, 5};
// The ablation ordering is averaged over more seeds; per-seed spread is wide.
const std::uint64_t kAblationSeeds[] = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};

// ---- A1 ---------------------------------------------------------------------

Outcome a1_gradients() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_name;
  std::size_t cases = 0;
  for (const auto& gc : oracle::grad_cases()) {
    std::mt19937_64 gen(std::hash<std::string>{}(gc.name) ^ 0xacce97ULL);
    for (int trial = 0; trial < 20; ++trial) {
      const double e = oracle::gradcheck(gc.f, gc.inputs(gen));
      if (e > worst) {
        worst = e;
        worst_name = gc.name;
      }
    }
    ++cases;
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-5 && secs < 60.0, std::to_string(cases) + " cases x 20 instances, max rel err " +
                                            sci(worst) + " (" + worst_name + "), " + fmt(secs, 1) + " s"};
}

// ---- A2 ---------------------------------------------------------------------

Outcome a2_loss_oracles() {
  auto c = [](const Tensor& t) { return ad::Var::constant(t); };
  std::mt19937_64 gen(2);
  double nce_err = 0.0, im_err = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor z = oracle::random_tensor(gen, {8, 5}), zp = oracle::random_tensor(gen, {8, 5});
    nce_err = std::max(nce_err, std::abs(losses::info_nce(c(z), c(zp)).item() - oracle::nce_symmetric(z, zp, 0.5)));
    const Tensor logits = oracle::random_tensor(gen, {8, 2}, -5, 5);
    im_err = std::max(im_err, std::abs(losses::im_loss(c(logits)).item() - oracle::im_two_term(logits)));
  }
  const int two[] = {0, 1, 1, 0};
  const int five[] = {0, 4, 2, 3};
  const double emo = losses::emotion_ce(c(Tensor({4, 2}, 0.0)), two).item();
  const double aug = losses::aug_ce(c(Tensor({4, 5}, 0.0)), five).item();
  const double im = losses::im_loss(c(Tensor({4, 2}, 0.0))).item();
  const double uniform_err = std::max({std::abs(emo - std::log(2.0)), std::abs(aug - std::log(5.0)), std::abs(im)});
  return {nce_err < 1e-10 && im_err < 1e-10 && uniform_err < 1e-9,
          "info_nce err " + sci(nce_err) + ", im err " + sci(im_err) + ", uniform cases err " + sci(uniform_err)};
}

// ---- A3 / A4 ----------------------------------------------------------------

Outcome a3_learnability() {
  const auto t0 = Clock::now();
  RunConfig base;
  base.train.lambdas = {0.0, 0.0, 0.0};
  base.train.source_only = true;
  base.train.max_epoch_pairs = 20;
  const Corpus corpus = prepare_corpus(base);
  int hits = 0;
  std::string accs;
  for (std::uint64_t seed : kSeeds) {
    RunConfig c = base;
    c.train.seed = seed;
    const auto r = run_experiment(c, corpus).report;
    hits += r.best_val_accuracy >= 0.9;
    accs += (accs.empty() ? "" : " ") + fmt(r.best_val_accuracy, 3);
  }
  const double secs = seconds_since(t0);
  return {hits >= 4 && secs < 600.0, "source val accuracy per seed [" + accs + "], " + std::to_string(hits) +
                                         "/5 >= 0.9, " + fmt(secs, 1) + " s"};
}

Outcome a4_domain_gap() {
  RunConfig base;
  base.train.source_only = true;
  const Corpus corpus = prepare_corpus(base);
  double val = 0.0, target = 0.0;
  for (std::uint64_t seed : kSeeds) {
    RunConfig c = base;
    c.train.seed = seed;
    const auto r = run_experiment(c, corpus).report;
    val += r.best_val_accuracy / 5.0;
    target += r.target_uar / 5.0;
  }
  return {val - target >= 0.05,
          "mean source val " + fmt(val) + ", mean target UAR " + fmt(target) + ", gap " + fmt(val - target)};
}

// ---- A5 / A6 share one ablation sweep -----------------------------------------

struct Sweep {
  std::vector<AblationRow> rows;
  double seconds = 0.0;
  double mean(AblationSpec s, std::uint64_t max_seed = 1000) const {
    double sum = 0.0;
    int n = 0;
    for (const auto& r : rows) {
      if (r.spec != s || r.seed > max_seed) continue;
      sum += r.uar;
      ++n;
    }
    return n ? sum / n : std::nan("");
  }
};

const Sweep& sweep() {
  static const Sweep s = [] {
    const auto t0 = Clock::now();
    const AblationSpec specs[] = {AblationSpec::Full, AblationSpec::NoLabels, AblationSpec::NoAug,
                                  AblationSpec::NoImAndAug, AblationSpec::NoContAndAug};
    Sweep out;
    out.rows = run_ablation(specs, RunConfig{}, kAblationSeeds, 1, [](const AblationRow& r) {
      std::cout << "  .. " << to_string(r.spec) << " seed " << r.seed << " uar " << fmt(r.uar) << std::endl;
    });
    out.seconds = seconds_since(t0);
    return out;
  }();
  return s;
}

Outcome a5_ablation_order() {
  const Sweep& s = sweep();
  // In label-free mode the complete objective is the no_labels row.
  const double full = s.mean(AblationSpec::NoLabels);
  const double labeled = s.mean(AblationSpec::Full);
  const double no_aug = s.mean(AblationSpec::NoAug);
  const double no_im = s.mean(AblationSpec::NoImAndAug);
  const double no_cont = s.mean(AblationSpec::NoContAndAug);
  const bool order = full >= no_im && full >= no_cont && (full - no_cont) >= (full - no_im) - 0.02;
  return {order && s.seconds < 7200.0,
          "10 seeds, labeled full " + fmt(labeled) + "; label-free means: full " + fmt(full) + ", no_aug " + fmt(no_aug) + ", no_im_and_aug " + fmt(no_im) +
              ", no_cont_and_aug " + fmt(no_cont) + "; sweep " + fmt(s.seconds, 0) + " s"};
}

Outcome a6_label_benefit() {
  const Sweep& s = sweep();
  const double labeled = s.mean(AblationSpec::Full, 5), free = s.mean(AblationSpec::NoLabels, 5);
  return {labeled > free, "seeds 1-5: labeled mean UAR " + fmt(labeled) + " vs label-free " + fmt(free)};
}

// ---- A7 ---------------------------------------------------------------------

Outcome a7_determinism() {
  const fs::path root = fs::temp_directory_path() / "serda_acceptance_a7";
  fs::remove_all(root);
  for (const char* run : {"a", "b"}) {
    const std::string cmd = std::string(SERDA_CLI) + " train --seed 7 --output " + (root / run).string() + " > /dev/null";
    if (std::system(cmd.c_str()) != 0) return {false, "train command failed: " + cmd};
  }
  bool same = true;
  std::string detail;
  for (const char* f : {"uar.json", "best.ckpt"}) {
    const std::string a = slurp(root / "a" / f), b = slurp(root / "b" / f);
    const bool eq = !a.empty() && a == b;
    same &= eq;
    detail += std::string(f) + (eq ? " identical (" : " DIFFERS (") + std::to_string(a.size()) + " bytes) ";
  }
  return {same, detail};
}

// ---- A8 ---------------------------------------------------------------------

Waveform test_signal(std::size_t n, std::uint64_t seed) {
  KeyedRng rng{seed};
  Waveform w;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / w.sample_rate;
    const double env = 0.6 + 0.4 * std::sin(2.0 * std::numbers::pi * 3.0 * t);
    w.samples[i] = env * (0.4 * std::sin(2.0 * std::numbers::pi * 220.0 * t) +
                          0.2 * std::sin(2.0 * std::numbers::pi * 660.0 * t + 0.3)) +
                   0.01 * rng.normal();
  }
  return w;
}

Outcome a8_augmentation() {
  using namespace augment;
  std::vector<std::string> failures;
  auto check = [&](bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  };

  const Waveform x = test_signal(4000, 11);
  check(polarity_inversion(polarity_inversion(x)) == x, "polarity involution");
  check(time_inversion(time_inversion(x)) == x, "time inversion involution");
  check(gain(x, 0.0) == x, "0 dB gain identity");
  check(shift(x, 0.0) == x, "zero shift identity");
  const Waveform once = peak_normalization(x), twice = peak_normalization(once);
  double drift = 0.0;
  for (std::size_t i = 0; i < once.size(); ++i) drift = std::max(drift, std::abs(once.samples[i] - twice.samples[i]));
  check(drift < 1e-12, "peak normalization idempotent");

  // notch: steady-state attenuation of a tone at the centre frequency
  Waveform tone;
  tone.samples.resize(8000);
  for (std::size_t i = 0; i < tone.size(); ++i) tone.samples[i] = 0.5 * std::sin(2.0 * std::numbers::pi * 1000.0 * i / 16000.0);
  const Waveform notched = band_stop_filter(tone, 1000.0, 200.0);
  double pin = 0.0, pout = 0.0;
  for (std::size_t i = 1000; i < tone.size(); ++i) {
    pin += tone.samples[i] * tone.samples[i];
    pout += notched.samples[i] * notched.samples[i];
  }
  const double atten_db = 10.0 * std::log10(pin / pout);
  check(atten_db >= 20.0, "notch attenuation " + fmt(atten_db, 1) + " dB");

  double worst_snr = 0.0;
  for (double snr : {3.0, 5.0, 12.5, 30.0}) {
    for (double alpha : {-2.0, -1.0, 0.0, 1.0, 2.0}) {
      KeyedRng rng{3, 4};
      const Waveform y = add_colored_noise(x, snr, alpha, rng);
      double pn = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) pn += std::pow(y.samples[i] - x.samples[i], 2) / static_cast<double>(x.size());
      worst_snr = std::max(worst_snr, std::abs(10.0 * std::log10(mean_power(x) / pn) - snr));
    }
  }
  check(worst_snr <= 0.1, "noise SNR error " + sci(worst_snr) + " dB");

  const fs::path golden = SERDA_GOLDEN_DIR;
  const Waveform in = wav::load(golden / "input.wav");
  const fs::path tmp = fs::temp_directory_path() / "serda_acceptance_golden.wav";
  int stable = 0;
  for (int id = 0; id < kNumPipelines; ++id) {
    KeyedRng rng = view_rng(7, 0, 0, 0);
    wav::save(tmp, apply_pipeline(in, id, rng).wave);
    const std::string want = slurp(golden / ("pipeline" + std::to_string(id) + ".wav"));
    stable += !want.empty() && slurp(tmp) == want;
  }
  check(stable == kNumPipelines, "golden files " + std::to_string(stable) + "/5 bit-stable");

  std::string detail = "notch " + fmt(atten_db, 1) + " dB, SNR error <= " + sci(worst_snr) + " dB, golden " +
                       std::to_string(stable) + "/5";
  for (const auto& f : failures) detail += "; failed: " + f;
  return {failures.empty(), detail};
}

// ---- A9 ---------------------------------------------------------------------

Outcome a9_protocol() {
  std::vector<std::string> notes;
  bool ok = true;

  for (bool labeled : {true, false}) {
    RunConfig c;
    c.train.target_labeled = labeled;
    c.train.max_epoch_pairs = 1;
    const Corpus corpus = prepare_corpus(c);
    const Encoder enc{c.encoder};
    Trainer tr(enc, corpus, c.train, c.augment);
    std::ostringstream log;
    tr.set_log(&log);
    tr.fit();
    std::map<std::string, int> steps;
    std::istringstream in(log.str());
    for (std::string line; std::getline(in, line);) {
      const auto j = nlohmann::json::parse(line);
      if (j.contains("phase")) ++steps[j["phase"].get<std::string>()];
    }
    const int want_target = labeled ? 25 : 100;
    ok &= steps["source"] == 100 && steps["target"] == want_target;
    notes.push_back(std::string(labeled ? "labeled " : "label-free ") + std::to_string(steps["source"]) + "+" +
                    std::to_string(steps["target"]));
  }

  RunConfig small;
  small.train.source_epoch_batches = 1;
  small.train.target_epoch_batches = 1;
  const Corpus corpus = prepare_corpus(small);
  const Encoder enc{small.encoder};
  {
    TrainConfig t = small.train;
    t.early_stop_patience = 100;
    t.max_epoch_pairs = 8;
    Trainer tr(enc, corpus, t, small.augment);
    tr.set_validator([](const ParamSet&) { return 0.5; });
    const auto r = tr.fit();
    bool monotone = true;
    for (std::size_t i = 1; i < r.lr_history.size(); ++i) monotone &= r.lr_history[i] <= r.lr_history[i - 1];
    const bool decayed = r.lr_history.front() == 1e-4 && std::abs(r.lr_history.back() - 1e-5) < 1e-18;
    ok &= decayed && monotone;
    std::ostringstream os;
    os << "lr " << r.lr_history.front() << " -> " << r.lr_history.back();
    notes.push_back(os.str());
  }
  {
    Trainer tr(enc, corpus, small.train, small.augment);
    auto calls = std::make_shared<std::size_t>(0);
    const double seq[] = {0.6, 0.7, 0.69, 0.95};
    tr.set_validator([calls, seq](const ParamSet&) { return seq[std::min<std::size_t>((*calls)++, 3)]; });
    const auto r = tr.fit();
    ok &= r.epoch_pairs == 3 && r.best_epoch_pair == 1 && r.early_stopped;
    notes.push_back("early stop after pair " + std::to_string(r.epoch_pairs) + ", best " + std::to_string(r.best_epoch_pair));
  }
  std::string detail;
  for (const auto& n : notes) detail += (detail.empty() ? "" : ", ") + n;
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"A1", a1_gradients},      {"A2", a2_loss_oracles}, {"A3", a3_learnability},
      {"A4", a4_domain_gap},     {"A5", a5_ablation_order}, {"A6", a6_label_benefit},
      {"A7", a7_determinism},    {"A8", a8_augmentation}, {"A9", a9_protocol},
  };
  std::set<std::string> only(argv + 1, argv + argc);
  int failed = 0;
  for (const auto& [id, run] : criteria) {
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << id << (o.pass ? " PASS " : " FAIL ") << o.detail << " [" << fmt(seconds_since(t0), 1) << " s]"
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
