#include "serda/losses.hpp"

#include <cmath>
#include <numeric>
#include <vector>

#include "serda/error.hpp"

namespace serda::losses {
namespace {

ad::Var cross_entropy(const ad::Var& logits, std::span<const int> labels, const char* what) {
  if (logits.value().rank() != 2) {
    throw DimensionError(std::string(what) + " expects [N x C] logits, got " + shape_str(logits.shape()));
  }
  const std::size_t n = logits.shape()[0], c = logits.shape()[1];
  if (labels.size() != n) {
    throw DimensionError(std::string(what) + ": " + std::to_string(labels.size()) + " labels for " + std::to_string(n) +
                         " rows");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
      throw DataError(std::string(what) + ": label " + std::to_string(labels[i]) + " of sample " + std::to_string(i) +
                      " outside [0, " + std::to_string(c) + ")");
    }
  }
  return ad::scale(ad::mean(ad::pick(ad::log_softmax(logits), labels)), -1.0);
}

std::vector<int> iota_labels(std::size_t n) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

void check_rows_nonzero(const Tensor& t, const char* name) {
  const std::size_t n = t.rows(), d = t.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < d; ++j) ss += t[i * d + j] * t[i * d + j];
    if (ss == 0.0) throw DomainError(std::string("info_nce: degenerate embedding, ") + name + " row " + std::to_string(i) + " has zero norm");
  }
}

// -mean_i log softmax(sim)[i, i]
ad::Var diagonal_nll(const ad::Var& sim) {
  const auto idx = iota_labels(sim.shape()[0]);
  return ad::scale(ad::mean(ad::pick(ad::log_softmax(sim), idx)), -1.0);
}

}  // namespace

ad::Var emotion_ce(const ad::Var& logits, std::span<const int> labels) {
  return cross_entropy(logits, labels, "emotion_ce");
}

ad::Var aug_ce(const ad::Var& logits, std::span<const int> labels) { return cross_entropy(logits, labels, "aug_ce"); }

ad::Var info_nce(const ad::Var& z, const ad::Var& z_prime, const NceOptions& options) {
  if (z.value().rank() != 2 || z.shape() != z_prime.shape()) {
    throw DimensionError("info_nce expects two [N x d] tensors, got " + shape_str(z.shape()) + " and " +
                         shape_str(z_prime.shape()));
  }
  const std::size_t n = z.shape()[0];
  if (n < 2) throw DataError("info_nce needs a batch of at least 2 pairs, got " + std::to_string(n));
  if (!(options.tau > 0.0)) throw ConfigError("info_nce temperature must be positive");
  check_rows_nonzero(z.value(), "z");
  check_rows_nonzero(z_prime.value(), "z_prime");

  const double inv_tau = 1.0 / options.tau;
  ad::Var a = ad::l2_normalize(z);
  ad::Var b = ad::l2_normalize(z_prime);

  if (options.denominator == NceDenominator::AllViews) {
    const ad::Var both_parts[] = {a, b};
    ad::Var both = ad::concat_rows(both_parts);
    ad::Var sim = ad::scale(ad::matmul(both, ad::transpose(both)), inv_tau);
    // Exclude self-similarity; exp(-1e6) underflows to exactly zero.
    Tensor mask({2 * n, 2 * n}, 0.0);
    for (std::size_t i = 0; i < 2 * n; ++i) mask.at(i, i) = -1e6;
    sim = ad::add(sim, ad::Var::constant(std::move(mask)));
    std::vector<int> partner(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
      partner[i] = static_cast<int>(i + n);
      partner[i + n] = static_cast<int>(i);
    }
    return ad::scale(ad::mean(ad::pick(ad::log_softmax(sim), partner)), -1.0);
  }

  ad::Var sim = ad::scale(ad::matmul(a, ad::transpose(b)), inv_tau);
  ad::Var forward = diagonal_nll(sim);
  if (!options.symmetric) return forward;
  ad::Var backward_dir = diagonal_nll(ad::transpose(sim));
  return ad::scale(ad::add(forward, backward_dir), 0.5);
}

ad::Var im_loss(const ad::Var& logits) {
  if (logits.value().rank() != 2) throw DimensionError("im_loss expects [N x C] logits, got " + shape_str(logits.shape()));
  const double n = static_cast<double>(logits.shape()[0]);
  ad::Var p = ad::softmax(logits);
  ad::Var mean_entropy = ad::scale(ad::sum(ad::mul(p, ad::log_clamped(p, kLogEps))), -1.0 / n);
  ad::Var marginal = ad::mean(p, 0);
  ad::Var marginal_neg_entropy = ad::sum(ad::mul(marginal, ad::log_clamped(marginal, kLogEps)));
  return ad::add(mean_entropy, marginal_neg_entropy);
}

void Lambdas::validate() const {
  if (!(aug >= 0.0) || !(cont >= 0.0) || !(im >= 0.0)) throw ConfigError("loss weights must be nonnegative");
}

ad::Var total_loss(const LossParts& parts, const Lambdas& lambdas, bool emo_enabled) {
  lambdas.validate();
  ad::Var total;
  auto accumulate = [&](const ad::Var& term) { total = total.defined() ? ad::add(total, term) : term; };
  if (emo_enabled) {
    if (!parts.emo.defined()) throw ContractError("emotion term enabled but not computed");
    accumulate(parts.emo);
  }
  if (lambdas.aug != 0.0) accumulate(ad::scale(parts.aug, lambdas.aug));
  if (lambdas.cont != 0.0) accumulate(ad::scale(parts.cont, lambdas.cont));
  if (lambdas.im != 0.0) accumulate(ad::scale(parts.im, lambdas.im));
  if (!total.defined()) total = ad::Var::constant(Tensor::scalar(0.0));
  return total;
}

bool LossBreakdown::all_finite() const {
  return std::isfinite(l_emo) && std::isfinite(l_aug) && std::isfinite(l_cont) && std::isfinite(l_im) &&
         std::isfinite(total);
}

LossBreakdown summarize(const LossParts& parts, const ad::Var& total, const Lambdas& lambdas, bool emo_enabled,
                        std::size_t batch_size) {
  LossBreakdown b;
  b.l_emo = emo_enabled && parts.emo.defined() ? parts.emo.item() : 0.0;
  b.l_aug = parts.aug.defined() ? parts.aug.item() : 0.0;
  b.l_cont = parts.cont.defined() ? parts.cont.item() : 0.0;
  b.l_im = parts.im.defined() ? parts.im.item() : 0.0;
  b.total = total.item();
  b.lambdas = lambdas;
  b.emo_enabled = emo_enabled;
  b.batch_size = batch_size;
  return b;
}

nlohmann::ordered_json to_log_record(const LossBreakdown& b, std::size_t step, const std::string& phase) {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["phase"] = phase;
  if (b.emo_enabled) j["l_emo"] = b.l_emo;
  j["l_aug"] = b.l_aug;
  j["l_cont"] = b.l_cont;
  j["l_im"] = b.l_im;
  j["total"] = b.total;
  return j;
}

}  // namespace serda::losses
