#include "core/metrics.hpp"

#include <algorithm>
#include <stdexcept>

#include "core/ops.hpp"
#include "core/util.hpp"

namespace dapt {

int64_t ConfusionMatrix::total() const {
  int64_t sum = 0;
  for (int64_t c : counts) sum += c;
  return sum;
}

ConfusionMatrix confusion_matrix(const std::vector<int>& gold,
                                 const std::vector<int>& pred,
                                 int num_classes) {
  if (gold.size() != pred.size()) {
    throw std::invalid_argument(
        "confusion_matrix: gold has " + std::to_string(gold.size()) +
        " labels, pred has " + std::to_string(pred.size()));
  }
  if (num_classes <= 0) {
    throw std::invalid_argument("confusion_matrix: num_classes must be > 0");
  }
  ConfusionMatrix m(num_classes);
  for (size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] < 0 || gold[i] >= num_classes || pred[i] < 0 ||
        pred[i] >= num_classes) {
      throw DataError("confusion_matrix: example " + std::to_string(i) +
                      " has labels (" + std::to_string(gold[i]) + ", " +
                      std::to_string(pred[i]) + ") outside 0.." +
                      std::to_string(num_classes - 1));
    }
    ++m.at(gold[i], pred[i]);
  }
  return m;
}

MetricsRecord f1_scores(const ConfusionMatrix& matrix) {
  int64_t total = matrix.total();
  if (total == 0) {
    throw DataError("f1_scores: empty confusion matrix");
  }
  int C = matrix.num_classes;
  MetricsRecord rec;
  rec.per_class.resize(static_cast<size_t>(C));

  int64_t trace = 0;
  double macro_sum = 0.0;
  int64_t supported_classes = 0;
  double weighted_sum = 0.0;

  for (int c = 0; c < C; ++c) {
    int64_t tp = matrix.at(c, c);
    int64_t gold_support = 0;
    int64_t predicted = 0;
    for (int other = 0; other < C; ++other) {
      gold_support += matrix.at(c, other);
      predicted += matrix.at(other, c);
    }
    ClassMetrics& cm = rec.per_class[static_cast<size_t>(c)];
    cm.gold_support = gold_support;
    cm.predicted_count = predicted;
    cm.precision = predicted > 0
                       ? static_cast<double>(tp) / static_cast<double>(predicted)
                       : 0.0;
    cm.recall = gold_support > 0 ? static_cast<double>(tp) /
                                       static_cast<double>(gold_support)
                                 : 0.0;
    cm.f1 = cm.precision + cm.recall > 0.0
                ? 2.0 * cm.precision * cm.recall / (cm.precision + cm.recall)
                : 0.0;
    trace += tp;
    if (gold_support > 0) {
      macro_sum += cm.f1;
      ++supported_classes;
      weighted_sum += static_cast<double>(gold_support) * cm.f1;
    }
  }
  rec.macro_f1 = macro_sum / static_cast<double>(supported_classes);
  rec.weighted_f1 = weighted_sum / static_cast<double>(total);
  rec.accuracy = static_cast<double>(trace) / static_cast<double>(total);
  return rec;
}

std::vector<int> predict_labels(EncoderModel& model, const Vocabulary& vocab,
                                const LabeledDataset& ds,
                                const std::vector<int64_t>& indices,
                                int max_len, int batch_size) {
  if (batch_size <= 0) {
    throw std::invalid_argument("predict_labels: batch_size must be > 0");
  }
  NoGradGuard no_grad;
  Rng unused_rng = make_rng(0);  // dropout is off in eval mode
  std::vector<int> predictions;
  predictions.reserve(indices.size());

  for (size_t begin = 0; begin < indices.size();
       begin += static_cast<size_t>(batch_size)) {
    size_t end = std::min(indices.size(), begin + static_cast<size_t>(batch_size));
    std::vector<TokenSequence> seqs;
    seqs.reserve(end - begin);
    for (size_t i = begin; i < end; ++i) {
      const auto& ex = ds.examples[static_cast<size_t>(indices[i])];
      seqs.push_back(encode(vocab, ex.text, max_len));
    }
    Batch batch = Batch::from_sequences(seqs);
    Tensor hidden = model.forward(batch, false, unused_rng);
    Tensor logits = model.classify_logits(hidden, false, unused_rng);
    auto values = logits.values();
    int width = static_cast<int>(logits.shape()[1]);
    for (size_t row = 0; row < end - begin; ++row) {
      int best = 0;
      float best_value = values[row * static_cast<size_t>(width)];
      for (int c = 1; c < width; ++c) {
        float v = values[row * static_cast<size_t>(width) + c];
        if (v > best_value) {  // strict: ties keep the lowest class index
          best_value = v;
          best = c;
        }
      }
      predictions.push_back(best);
    }
  }
  return predictions;
}

MetricsRecord evaluate_model(EncoderModel& model, const Vocabulary& vocab,
                             const LabeledDataset& ds,
                             const std::vector<int64_t>& indices, int max_len,
                             int batch_size) {
  std::vector<int> pred =
      predict_labels(model, vocab, ds, indices, max_len, batch_size);
  std::vector<int> gold;
  gold.reserve(indices.size());
  for (int64_t idx : indices) {
    gold.push_back(ds.examples[static_cast<size_t>(idx)].label);
  }
  return f1_scores(confusion_matrix(gold, pred, model.config().num_labels));
}

}  // namespace dapt
