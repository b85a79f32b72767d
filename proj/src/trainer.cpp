#include "serda/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "serda/error.hpp"

namespace serda {

void TrainConfig::validate() const {
  lambdas.validate();
  if (!(lr >= 0.0)) throw ConfigError("train.lr must be nonnegative");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) throw ConfigError("train.lr_decay_factor must lie in (0, 1]");
  if (lr_patience < 1) throw ConfigError("train.lr_patience must be at least 1");
  if (early_stop_patience < 1) throw ConfigError("train.early_stop_patience must be at least 1");
  if (source_epoch_batches == 0) throw ConfigError("train.source_epoch_batches must be positive");
  if (target_labeled && !source_only && target_epoch_batches == 0) {
    throw ConfigError("train.target_epoch_batches must be positive");
  }
  if (batch_size < 2) throw ConfigError("train.batch_size must be at least 2 (contrastive negatives)");
  if (!(nce.tau > 0.0)) throw ConfigError("train.tau must be positive");
  if (max_epoch_pairs < 1) throw ConfigError("train.max_epoch_pairs must be at least 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) || !(adam_eps > 0.0)) {
    throw ConfigError("Adam hyperparameters out of range");
  }
}

Adam::Adam(const ParamSet& params, double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& v : params.values()) {
    m_.emplace_back(v.shape(), 0.0);
    v_.emplace_back(v.shape(), 0.0);
  }
}

void Adam::step(ParamSet& params, const std::vector<Tensor>& grads, double lr) {
  if (grads.size() != params.size() || m_.size() != params.size()) {
    throw ContractError("optimizer slots do not match the parameter set");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params.values()[i].data();
    const auto g = grads[i].data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      p[k] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

bool PlateauScheduler::observe(double metric) {
  if (metric > best_) {
    best_ = metric;
    bad_epochs_ = 0;
    return false;
  }
  if (++bad_epochs_ > patience_) {
    bad_epochs_ = 0;
    ++decays_;
    return true;
  }
  return false;
}

Trainer::Trainer(const Encoder& encoder, const Corpus& corpus, TrainConfig config, augment::AugmentConfig augment)
    : encoder_(encoder), corpus_(corpus), config_(std::move(config)), augment_(augment) {
  config_.validate();
  augment_.validate(corpus.manifest.sample_rate);
  state_.params = encoder_.init_params(config_.seed);
  state_.optimizer = Adam(state_.params, config_.adam_beta1, config_.adam_beta2, config_.adam_eps);
  state_.current_lr = config_.lr;
  state_.plateau = PlateauScheduler(config_.lr_decay_factor, config_.lr_patience);
  state_.best_params = state_.params;
}

ad::Var contrastive_term(const ad::Var& z_a, const ad::Var& z_b, const losses::NceOptions& options,
                         std::size_t* dropped) {
  const Tensor& va = z_a.value();
  const Tensor& vb = z_b.value();
  std::vector<std::size_t> keep;
  if (va.rank() == 2 && va.shape() == vb.shape()) {
    const auto zero_row = [](const Tensor& t, std::size_t r) {
      for (std::size_t c = 0; c < t.cols(); ++c)
        if (t.at(r, c) != 0.0) return false;
      return true;
    };
    for (std::size_t r = 0; r < va.rows(); ++r)
      if (!zero_row(va, r) && !zero_row(vb, r)) keep.push_back(r);
  }
  const std::size_t n = va.rank() == 2 ? va.rows() : 0;
  if (dropped) *dropped = n - std::min(n, keep.size());
  // shape problems and the common case go straight to info_nce
  if (va.rank() != 2 || va.shape() != vb.shape() || keep.size() == n) return losses::info_nce(z_a, z_b, options);
  if (keep.size() < 2) return ad::Var::constant(Tensor::scalar(0.0));
  Tensor select(Shape{keep.size(), n}, 0.0);
  for (std::size_t i = 0; i < keep.size(); ++i) select.at(i, keep[i]) = 1.0;
  const ad::Var s = ad::Var::constant(std::move(select));
  return losses::info_nce(ad::matmul(s, z_a), ad::matmul(s, z_b), options);
}

losses::LossBreakdown Trainer::train_step(const Batch& batch, bool emo_enabled) {
  const std::size_t n = batch.size();
  std::vector<augment::AugmentedPair> pairs;
  pairs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t s = batch.samples()[i];
    pairs.push_back(augment::make_pair(corpus_.waves[s], s, config_.seed, batch.aug_keys()[i], augment_));
  }
  std::vector<const Waveform*> views_a, views_b;
  std::vector<int> aug_labels;
  for (const auto& p : pairs) views_a.push_back(&p.view_a);
  for (const auto& p : pairs) views_b.push_back(&p.view_b);
  for (const auto& p : pairs) aug_labels.push_back(p.pipeline_label_a);
  for (const auto& p : pairs) aug_labels.push_back(p.pipeline_label_b);

  ParamVars vars(state_.params);
  BatchGraph a = encoder_.forward_graph(vars, views_a);
  BatchGraph b = encoder_.forward_graph(vars, views_b);
  const ad::Var emo_parts[] = {a.emo_logits, b.emo_logits};
  const ad::Var aug_parts[] = {a.aug_logits, b.aug_logits};
  ad::Var emo_logits = ad::concat_rows(emo_parts);
  ad::Var aug_logits = ad::concat_rows(aug_parts);

  losses::LossParts parts;
  if (emo_enabled) {
    const auto labels = batch.emotion_labels();
    std::vector<int> both(labels.begin(), labels.end());
    both.insert(both.end(), labels.begin(), labels.end());
    parts.emo = losses::emotion_ce(emo_logits, both);
  }
  parts.aug = losses::aug_ce(aug_logits, aug_labels);
  parts.cont = contrastive_term(a.z, b.z, config_.nce);
  parts.im = losses::im_loss(emo_logits);
  ad::Var total = losses::total_loss(parts, config_.lambdas, emo_enabled);
  losses::LossBreakdown breakdown = losses::summarize(parts, total, config_.lambdas, emo_enabled, n);

  if (!breakdown.all_finite()) {
    std::ostringstream os;
    os << "non-finite loss at step " << state_.step << " (" << to_string(batch.domain()) << "): l_emo=" << breakdown.l_emo
       << " l_aug=" << breakdown.l_aug << " l_cont=" << breakdown.l_cont << " l_im=" << breakdown.l_im
       << " total=" << breakdown.total;
    throw NumericalError(os.str());
  }

  const ad::Gradients grads = ad::backward(total);
  state_.optimizer.step(state_.params, vars.gradients(grads), state_.current_lr);
  ++state_.step;
  return breakdown;
}

EpochSummary Trainer::run_epoch(Domain domain) {
  EpochSummary summary;
  summary.domain = domain;
  summary.emo_enabled = domain == Domain::Source || config_.target_labeled;
  const std::size_t num_batches = domain == Domain::Target && config_.target_labeled ? config_.target_epoch_batches
                                                                                      : config_.source_epoch_batches;
  const auto batches = batch_iter(corpus_, domain, Split::Train, config_.batch_size, num_batches, config_.seed,
                                  state_.epoch_counter++, summary.emo_enabled);
  const std::string phase(to_string(domain));
  for (const auto& batch : batches) {
    const auto b = train_step(batch, summary.emo_enabled);
    if (log_) *log_ << losses::to_log_record(b, state_.step - 1, phase).dump() << '\n';
    summary.mean.l_emo += b.l_emo;
    summary.mean.l_aug += b.l_aug;
    summary.mean.l_cont += b.l_cont;
    summary.mean.l_im += b.l_im;
    summary.mean.total += b.total;
    ++summary.steps;
  }
  const double k = summary.steps ? 1.0 / static_cast<double>(summary.steps) : 0.0;
  summary.mean.l_emo *= k;
  summary.mean.l_aug *= k;
  summary.mean.l_cont *= k;
  summary.mean.l_im *= k;
  summary.mean.total *= k;
  summary.mean.lambdas = config_.lambdas;
  summary.mean.emo_enabled = summary.emo_enabled;
  summary.mean.batch_size = config_.batch_size;
  return summary;
}

double Trainer::validate() const {
  if (validator_) return validator_(state_.params);
  return accuracy(evaluate(encoder_, state_.params, corpus_, Domain::Source, Split::Val));
}

FitReport Trainer::fit() {
  FitReport report;
  for (int pair = 0; pair < config_.max_epoch_pairs; ++pair) {
    state_.epoch_pair_index = pair;
    run_epoch(Domain::Source);
    if (!config_.source_only) run_epoch(Domain::Target);

    const double acc = validate();
    report.val_history.push_back(acc);
    if (acc > state_.best_val_accuracy) {
      state_.best_val_accuracy = acc;
      state_.best_params = state_.params;
      state_.best_epoch_pair = pair;
      state_.epochs_since_improvement = 0;
    } else {
      ++state_.epochs_since_improvement;
    }
    if (state_.plateau.observe(acc)) state_.current_lr *= config_.lr_decay_factor;
    report.lr_history.push_back(state_.current_lr);
    report.epoch_pairs = pair + 1;

    report.early_stopped = state_.epochs_since_improvement >= config_.early_stop_patience;
    const bool stopped = report.early_stopped || pair + 1 == config_.max_epoch_pairs;
    if (log_) {
      nlohmann::ordered_json rec;
      rec["epoch_pair"] = pair;
      rec["val_accuracy"] = acc;
      rec["current_lr"] = state_.current_lr;
      rec["stopped"] = stopped;
      *log_ << rec.dump() << '\n';
    }
    if (stopped) break;
  }

  state_.params = state_.best_params;
  report.best_epoch_pair = state_.best_epoch_pair;
  report.best_val_accuracy = state_.best_val_accuracy;
  report.total_steps = state_.step;
  report.best_params = state_.best_params;
  report.target_confusion = evaluate(encoder_, state_.params, corpus_, Domain::Target, Split::Test);
  report.target_uar = uar(report.target_confusion);
  return report;
}

}  // namespace serda
