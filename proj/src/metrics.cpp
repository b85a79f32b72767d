#include "serda/metrics.hpp"

#include <algorithm>
#include <iomanip>
#include <limits>
#include <sstream>

#include "serda/error.hpp"

namespace serda {

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes) : n_(num_classes), counts_(num_classes * num_classes, 0) {
  if (num_classes == 0) throw ConfigError("confusion matrix needs at least one class");
}

ConfusionMatrix ConfusionMatrix::from_counts(const std::vector<std::vector<std::size_t>>& counts) {
  ConfusionMatrix cm(counts.size());
  for (std::size_t t = 0; t < counts.size(); ++t) {
    if (counts[t].size() != counts.size()) throw DimensionError("confusion matrix must be square");
    for (std::size_t p = 0; p < counts.size(); ++p) cm.counts_[t * cm.n_ + p] = counts[t][p];
  }
  return cm;
}

void ConfusionMatrix::add(int truth, int predicted) {
  if (truth < 0 || predicted < 0 || static_cast<std::size_t>(truth) >= n_ || static_cast<std::size_t>(predicted) >= n_) {
    throw DataError("confusion matrix entry (" + std::to_string(truth) + ", " + std::to_string(predicted) +
                    ") outside " + std::to_string(n_) + " classes");
  }
  ++counts_[static_cast<std::size_t>(truth) * n_ + static_cast<std::size_t>(predicted)];
}

std::size_t ConfusionMatrix::row_total(std::size_t truth) const {
  std::size_t s = 0;
  for (std::size_t p = 0; p < n_; ++p) s += count(truth, p);
  return s;
}

std::size_t ConfusionMatrix::total() const {
  std::size_t s = 0;
  for (auto c : counts_) s += c;
  return s;
}

std::vector<double> per_class_recall(const ConfusionMatrix& cm) {
  std::vector<double> recall(cm.num_classes());
  for (std::size_t c = 0; c < cm.num_classes(); ++c) {
    const std::size_t row = cm.row_total(c);
    if (row == 0) throw DataError("recall undefined for class " + std::to_string(c) + ": no samples of that class");
    recall[c] = static_cast<double>(cm.count(c, c)) / static_cast<double>(row);
  }
  return recall;
}

double uar(const ConfusionMatrix& cm) {
  const auto recall = per_class_recall(cm);
  double s = 0.0;
  for (double r : recall) s += r;
  return s / static_cast<double>(recall.size());
}

double accuracy(const ConfusionMatrix& cm) {
  const std::size_t total = cm.total();
  if (total == 0) throw DataError("accuracy of an empty evaluation set");
  std::size_t correct = 0;
  for (std::size_t c = 0; c < cm.num_classes(); ++c) correct += cm.count(c, c);
  return static_cast<double>(correct) / static_cast<double>(total);
}

nlohmann::ordered_json uar_report(const ConfusionMatrix& cm) {
  nlohmann::ordered_json j;
  auto rows = nlohmann::ordered_json::array();
  for (std::size_t t = 0; t < cm.num_classes(); ++t) {
    auto row = nlohmann::ordered_json::array();
    for (std::size_t p = 0; p < cm.num_classes(); ++p) row.push_back(cm.count(t, p));
    rows.push_back(std::move(row));
  }
  j["confusion_matrix"] = std::move(rows);
  j["per_class_recall"] = per_class_recall(cm);
  j["uar"] = uar(cm);
  return j;
}

int argmax(std::span<const double> logits) {
  return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

namespace {

constexpr std::size_t kEvalChunk = 16;

template <typename F>
void for_each_embedding_chunk(const Encoder& encoder, const ParamSet& params, const Corpus& corpus,
                              const std::vector<std::size_t>& idx, F&& visit) {
  ParamVars p(params, false);
  for (std::size_t start = 0; start < idx.size(); start += kEvalChunk) {
    const std::size_t end = std::min(idx.size(), start + kEvalChunk);
    std::vector<const Waveform*> batch;
    for (std::size_t k = start; k < end; ++k) batch.push_back(&corpus.waves[idx[k]]);
    BatchGraph g = encoder.forward_graph(p, batch);
    visit(start, end, g);
  }
}

}  // namespace

ConfusionMatrix evaluate(const Encoder& encoder, const ParamSet& params, const Corpus& corpus, Domain domain,
                         Split split) {
  const auto idx = corpus.indices(domain, split);
  if (idx.empty()) {
    throw DataError("cannot evaluate on empty " + std::string(to_string(domain)) + "/" + std::string(to_string(split)) +
                    " split");
  }
  const std::size_t c = encoder.config().num_emotion_classes;
  ConfusionMatrix cm(c);
  for_each_embedding_chunk(encoder, params, corpus, idx, [&](std::size_t start, std::size_t end, const BatchGraph& g) {
    const Tensor& logits = g.emo_logits.value();
    for (std::size_t k = start; k < end; ++k) {
      const auto& row = corpus.manifest.rows[idx[k]];
      if (row.emotion == kUnlabeled) throw DataError("cannot evaluate unlabeled sample " + row.path);
      const std::size_t r = k - start;
      cm.add(row.emotion, argmax(logits.data().subspan(r * c, c)));
    }
  });
  return cm;
}

std::vector<LatentRow> export_latents(const Encoder& encoder, const ParamSet& params, const Corpus& corpus,
                                      Domain domain, Split split) {
  const auto idx = corpus.indices(domain, split);
  std::vector<LatentRow> rows;
  rows.reserve(idx.size());
  const std::size_t d = encoder.config().model_dim;
  for_each_embedding_chunk(encoder, params, corpus, idx, [&](std::size_t start, std::size_t end, const BatchGraph& g) {
    const Tensor& h = g.h.value();
    for (std::size_t k = start; k < end; ++k) {
      const std::size_t r = k - start;
      LatentRow row;
      row.h.assign(h.data().begin() + static_cast<std::ptrdiff_t>(r * d),
                   h.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * d));
      row.emotion = corpus.manifest.rows[idx[k]].emotion;
      row.domain = domain;
      rows.push_back(std::move(row));
    }
  });
  return rows;
}

std::string format_latents_csv(const std::vector<LatentRow>& rows) {
  std::ostringstream os;
  const std::size_t d = rows.empty() ? 0 : rows.front().h.size();
  for (std::size_t i = 0; i < d; ++i) os << "h_" << i << ',';
  os << "emotion,domain\n";
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& r : rows) {
    for (double v : r.h) os << v << ',';
    if (r.emotion != kUnlabeled) os << r.emotion;
    os << ',' << to_string(r.domain) << '\n';
  }
  return os.str();
}

}  // namespace serda
