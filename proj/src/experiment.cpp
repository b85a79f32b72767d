#include "serda/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "serda/error.hpp"
#include "serda/metrics.hpp"

namespace serda {

Corpus prepare_corpus(const RunConfig& config) {
  config.validate();
  Corpus corpus;
  if (config.data.manifest.empty()) {
    corpus = generate_synthetic(config.synth);
  } else {
    const std::filesystem::path path = config.data.manifest;
    if (!std::filesystem::exists(path)) throw IoError("manifest not found: " + path.string());
    corpus = load_corpus(read_manifest(path), path.parent_path(), config.synth);
  }
  if (static_cast<std::size_t>(corpus.manifest.num_classes) != config.encoder.num_emotion_classes) {
    throw ConfigError("manifest has " + std::to_string(corpus.manifest.num_classes) +
                      " emotion classes but encoder.num_emotion_classes is " +
                      std::to_string(config.encoder.num_emotion_classes));
  }
  corpus.manifest = split(corpus.manifest, config.data.ratios(config.train.target_labeled), config.data.split_seed);
  return corpus;
}

ExperimentResult run_experiment(const RunConfig& config, const Corpus& corpus, std::ostream* log) {
  config.validate();
  const Encoder encoder(config.encoder);
  Trainer trainer(encoder, corpus, config.train, config.augment);
  trainer.set_log(log);
  ExperimentResult r;
  r.report = trainer.fit();
  r.uar_report = uar_report(r.report.target_confusion);
  return r;
}

ExperimentResult run_experiment(const RunConfig& config, std::ostream* log) {
  const Corpus corpus = prepare_corpus(config);
  return run_experiment(config, corpus, log);
}

std::string_view to_string(AblationSpec s) {
  switch (s) {
    case AblationSpec::Full: return "full";
    case AblationSpec::NoLabels: return "no_labels";
    case AblationSpec::NoAug: return "no_aug";
    case AblationSpec::NoImAndAug: return "no_im_and_aug";
    case AblationSpec::NoContAndAug: return "no_cont_and_aug";
  }
  throw ContractError("bad ablation spec");
}

AblationSpec parse_ablation(std::string_view s) {
  for (AblationSpec a : kAllAblations) {
    if (to_string(a) == s) return a;
  }
  throw ConfigError("unknown ablation spec '" + std::string(s) +
                    "' (expected full, no_labels, no_aug, no_im_and_aug or no_cont_and_aug)");
}

RunConfig apply_ablation(AblationSpec spec, const RunConfig& base) {
  RunConfig c = base;
  if (spec == AblationSpec::Full) return c;
  c.train.target_labeled = false;
  switch (spec) {
    case AblationSpec::NoAug: c.train.lambdas.aug = 0.0; break;
    case AblationSpec::NoImAndAug: c.train.lambdas.aug = c.train.lambdas.im = 0.0; break;
    case AblationSpec::NoContAndAug: c.train.lambdas.aug = c.train.lambdas.cont = 0.0; break;
    default: break;
  }
  return c;
}

std::vector<AblationRow> run_ablation(std::span<const AblationSpec> specs, const RunConfig& base,
                                      std::span<const std::uint64_t> seeds, std::size_t jobs,
                                      const AblationProgress& progress) {
  std::vector<AblationRow> rows;
  std::vector<RunConfig> configs;
  for (AblationSpec s : specs) {
    for (std::uint64_t seed : seeds) {
      RunConfig c = apply_ablation(s, base);
      c.train.seed = seed;
      AblationRow row;
      row.spec = s;
      row.seed = seed;
      row.changed_keys = config_diff(base, c);
      rows.push_back(std::move(row));
      configs.push_back(std::move(c));
    }
  }

  // The corpus depends only on the target mode; decode each variant once.
  std::map<bool, Corpus> corpora;
  for (const auto& c : configs) {
    if (!corpora.contains(c.train.target_labeled)) corpora.emplace(c.train.target_labeled, prepare_corpus(c));
  }

  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t i; (i = next++) < rows.size();) {
      try {
        const auto r = run_experiment(configs[i], corpora.at(configs[i].train.target_labeled));
        std::lock_guard lock(mu);
        rows[i].uar = r.report.target_uar;
        if (progress) progress(rows[i]);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        next = rows.size();
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(jobs, rows.size()));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return rows;
}

std::optional<double> ablation_mean(std::span<const AblationRow> rows, AblationSpec spec) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (r.spec != spec) continue;
    sum += r.uar;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

std::string format_ablation_csv(std::span<const AblationRow> rows) {
  std::ostringstream os;
  os.precision(17);
  os << "spec,seed,uar\n";
  std::vector<AblationSpec> order;
  for (const auto& r : rows) {
    os << to_string(r.spec) << ',' << r.seed << ',' << r.uar << '\n';
    if (std::find(order.begin(), order.end(), r.spec) == order.end()) order.push_back(r.spec);
  }
  for (AblationSpec s : order) os << to_string(s) << ",mean," << *ablation_mean(rows, s) << '\n';
  return os.str();
}

}  // namespace serda
