#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <ostream>
#include <vector>

#include "serda/augment.hpp"
#include "serda/corpus.hpp"
#include "serda/encoder.hpp"
#include "serda/losses.hpp"
#include "serda/metrics.hpp"
#include "serda/params.hpp"

namespace serda {

struct TrainConfig {
  losses::Lambdas lambdas;  // (aug, cont, im) = (0.1, 0.5, 0.5)
  double lr = 1e-4;
  double lr_decay_factor = 0.1;
  int lr_patience = 5;
  std::size_t source_epoch_batches = 100;
  std::size_t target_epoch_batches = 25;  // labeled mode; label-free uses source_epoch_batches
  int early_stop_patience = 1;
  std::size_t batch_size = 4;
  losses::NceOptions nce;
  std::uint64_t seed = 0;
  bool target_labeled = true;
  bool source_only = false;  // skip the target epoch entirely
  int max_epoch_pairs = 200;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

class Adam {
 public:
  Adam() = default;
  Adam(const ParamSet& params, double beta1, double beta2, double eps);

  void step(ParamSet& params, const std::vector<Tensor>& grads, double lr);
  std::uint64_t steps() const { return t_; }

 private:
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  std::vector<Tensor> m_, v_;
  std::uint64_t t_ = 0;
};

// Multiplies the learning rate by `factor` once the metric has failed to beat
// its best value for more than `patience` consecutive observations.
class PlateauScheduler {
 public:
  PlateauScheduler() = default;
  PlateauScheduler(double factor, int patience) : factor_(factor), patience_(patience) {}

  // Returns true when a decay is due after this observation.
  bool observe(double metric);
  double factor() const { return factor_; }
  int decays() const { return decays_; }

 private:
  double factor_ = 0.1;
  int patience_ = 5;
  double best_ = -std::numeric_limits<double>::infinity();
  int bad_epochs_ = 0;
  int decays_ = 0;
};

struct TrainState {
  ParamSet params;
  Adam optimizer;
  double current_lr = 0.0;
  PlateauScheduler plateau;
  double best_val_accuracy = -std::numeric_limits<double>::infinity();
  int epochs_since_improvement = 0;
  int epoch_pair_index = 0;
  std::size_t step = 0;
  std::uint64_t epoch_counter = 0;  // keys shuffling and augmentation
  ParamSet best_params;
  int best_epoch_pair = -1;
};

struct EpochSummary {
  Domain domain = Domain::Source;
  bool emo_enabled = true;
  std::size_t steps = 0;
  losses::LossBreakdown mean;
};

struct FitReport {
  int epoch_pairs = 0;
  int best_epoch_pair = -1;
  double best_val_accuracy = 0.0;
  bool early_stopped = false;
  std::size_t total_steps = 0;
  std::vector<double> val_history;
  std::vector<double> lr_history;  // learning rate in effect after each pair
  ConfusionMatrix target_confusion{2};
  double target_uar = 0.0;
  ParamSet best_params;
};

using Validator = std::function<double(const ParamSet&)>;

// Contrastive term for one step. A pair whose projection is exactly zero in
// either view (every hidden ReLU unit off) has no defined cosine and already
// gets no gradient through the projection, so it is dropped from the InfoNCE
// batch. Fewer than two usable pairs gives a constant zero. With no zero rows
// this is exactly info_nce(z_a, z_b).
ad::Var contrastive_term(const ad::Var& z_a, const ad::Var& z_b, const losses::NceOptions& options,
                         std::size_t* dropped = nullptr);

// Alternates one source epoch and one target epoch. Source steps always use
// the emotion loss; target steps use it only when target labels are available
// (label-free mode never reads them). After each pair the source-validation
// accuracy drives early stopping and the plateau learning-rate schedule; the
// best-validation parameters are restored and scored once on the target test
// split.
class Trainer {
 public:
  Trainer(const Encoder& encoder, const Corpus& corpus, TrainConfig config, augment::AugmentConfig augment = {});

  // JSON-lines sink for step and validation records.
  void set_log(std::ostream* log) { log_ = log; }
  // Replaces the source-validation accuracy (tests drive the schedule with it).
  void set_validator(Validator validator) { validator_ = std::move(validator); }

  losses::LossBreakdown train_step(const Batch& batch, bool emo_enabled);
  EpochSummary run_epoch(Domain domain);
  double validate() const;
  FitReport fit();

  const TrainConfig& config() const { return config_; }
  TrainState& state() { return state_; }
  const TrainState& state() const { return state_; }

 private:
  const Encoder& encoder_;
  const Corpus& corpus_;
  TrainConfig config_;
  augment::AugmentConfig augment_;
  TrainState state_;
  std::ostream* log_ = nullptr;
  Validator validator_;
};

}  // namespace serda
