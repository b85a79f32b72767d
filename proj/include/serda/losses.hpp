#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "json.hpp"

#include "serda/autodiff.hpp"

namespace serda::losses {

// Probabilities are clamped to this floor before every log.
inline constexpr double kLogEps = 1e-12;

// Mean over rows of -log softmax(logits)[label]; labels must lie in [0, C).
ad::Var emotion_ce(const ad::Var& logits, std::span<const int> labels);
// Same, against augmentation-pipeline labels (both views of every pair).
ad::Var aug_ce(const ad::Var& logits, std::span<const int> labels);

enum class NceDenominator {
  // Row i is contrasted against every other-view embedding j (including j = i).
  CrossView,
  // NT-Xent: each of the 2N embeddings against the other 2N - 1.
  AllViews,
};

struct NceOptions {
  double tau = 0.5;
  bool symmetric = true;
  NceDenominator denominator = NceDenominator::CrossView;
};

// InfoNCE on cosine similarities of paired rows of z and z_prime [N x d].
// Cross-view form per direction: mean_i -log(exp(s_ii / tau) / sum_j exp(s_ij / tau));
// the symmetric form averages the z->z' and z'->z directions.
ad::Var info_nce(const ad::Var& z, const ad::Var& z_prime, const NceOptions& options = {});

// Information maximisation: mean per-row prediction entropy plus the negative
// entropy of the batch-mean prediction. Lies in [-log C, 0].
ad::Var im_loss(const ad::Var& logits);

struct Lambdas {
  double aug = 0.1;
  double cont = 0.5;
  double im = 0.5;
  void validate() const;
  friend bool operator==(const Lambdas&, const Lambdas&) = default;
};

struct LossParts {
  ad::Var emo;  // may be undefined when the emotion term is disabled
  ad::Var aug;
  ad::Var cont;
  ad::Var im;
};

// emo * [emo_enabled] + lambda_aug * aug + lambda_cont * cont + lambda_im * im.
// Terms with a zero weight are left out of the graph.
ad::Var total_loss(const LossParts& parts, const Lambdas& lambdas, bool emo_enabled);

struct LossBreakdown {
  double l_emo = 0.0;
  double l_aug = 0.0;
  double l_cont = 0.0;
  double l_im = 0.0;
  double total = 0.0;
  Lambdas lambdas;
  bool emo_enabled = true;
  std::size_t batch_size = 0;

  bool all_finite() const;
};

LossBreakdown summarize(const LossParts& parts, const ad::Var& total, const Lambdas& lambdas, bool emo_enabled,
                        std::size_t batch_size);

// One training-log record. l_emo is omitted when the emotion term is off.
nlohmann::ordered_json to_log_record(const LossBreakdown& b, std::size_t step, const std::string& phase);

}  // namespace serda::losses
