#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "serda/corpus.hpp"
#include "serda/encoder.hpp"

namespace serda {

// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes);
  static ConfusionMatrix from_counts(const std::vector<std::vector<std::size_t>>& counts);

  void add(int truth, int predicted);

  std::size_t num_classes() const { return n_; }
  std::size_t count(std::size_t truth, std::size_t predicted) const { return counts_[truth * n_ + predicted]; }
  std::size_t row_total(std::size_t truth) const;
  std::size_t total() const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t n_;
  std::vector<std::size_t> counts_;
};

// diagonal / row sum per class; DataError naming the class if its row is empty.
std::vector<double> per_class_recall(const ConfusionMatrix& cm);
// Unweighted average recall: mean of per-class recalls.
double uar(const ConfusionMatrix& cm);
double accuracy(const ConfusionMatrix& cm);

// {"confusion_matrix": [[...]], "per_class_recall": [...], "uar": x}
nlohmann::ordered_json uar_report(const ConfusionMatrix& cm);

int argmax(std::span<const double> logits);

// Argmax of the emotion logits on unaugmented waveforms.
ConfusionMatrix evaluate(const Encoder& encoder, const ParamSet& params, const Corpus& corpus, Domain domain,
                         Split split);

struct LatentRow {
  std::vector<double> h;
  int emotion = kUnlabeled;
  Domain domain = Domain::Source;
};

// Pooled embedding h of every sample in (domain, split), unaugmented.
std::vector<LatentRow> export_latents(const Encoder& encoder, const ParamSet& params, const Corpus& corpus,
                                      Domain domain, Split split);
// Header `h_0,...,h_{D-1},emotion,domain`.
std::string format_latents_csv(const std::vector<LatentRow>& rows);

}  // namespace serda
