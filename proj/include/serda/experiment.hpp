#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "serda/config.hpp"
#include "serda/corpus.hpp"
#include "serda/trainer.hpp"

namespace serda {

// Decoded, split corpus for a run: the manifest (or synthetic spec) split with
// the ratios of the configured target mode.
Corpus prepare_corpus(const RunConfig& config);

struct ExperimentResult {
  FitReport report;
  nlohmann::ordered_json uar_report;
};

// Trains on an already prepared corpus; `log` receives the JSON-lines log.
ExperimentResult run_experiment(const RunConfig& config, const Corpus& corpus, std::ostream* log = nullptr);
ExperimentResult run_experiment(const RunConfig& config, std::ostream* log = nullptr);

enum class AblationSpec { Full, NoLabels, NoAug, NoImAndAug, NoContAndAug };

inline constexpr AblationSpec kAllAblations[] = {AblationSpec::Full, AblationSpec::NoLabels, AblationSpec::NoAug,
                                                  AblationSpec::NoImAndAug, AblationSpec::NoContAndAug};

std::string_view to_string(AblationSpec s);
AblationSpec parse_ablation(std::string_view s);

// `full` keeps the base target mode; every other row is label-free and zeroes
// its named loss weights. Only those fields ever differ from `base`.
RunConfig apply_ablation(AblationSpec spec, const RunConfig& base);

struct AblationRow {
  AblationSpec spec = AblationSpec::Full;
  std::uint64_t seed = 0;
  double uar = 0.0;
  std::vector<std::string> changed_keys;  // config diff against the base
};

using AblationProgress = std::function<void(const AblationRow&)>;

// One training run per (spec, seed), up to `jobs` at a time. Rows come back in
// (spec, seed) order whatever the completion order.
std::vector<AblationRow> run_ablation(std::span<const AblationSpec> specs, const RunConfig& base,
                                      std::span<const std::uint64_t> seeds, std::size_t jobs = 1,
                                      const AblationProgress& progress = {});

// `spec,seed,uar` rows followed by one `<spec>,mean,<uar>` row per spec.
std::string format_ablation_csv(std::span<const AblationRow> rows);
std::optional<double> ablation_mean(std::span<const AblationRow> rows, AblationSpec spec);

}  // namespace serda
