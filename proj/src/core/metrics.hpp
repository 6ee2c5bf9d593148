#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/dataset.hpp"
#include "core/model.hpp"
#include "core/wordpiece.hpp"

namespace dapt {

// Row = gold label, column = predicted label.
struct ConfusionMatrix {
  int num_classes = 0;
  std::vector<int64_t> counts;  // row-major num_classes x num_classes

  explicit ConfusionMatrix(int classes)
      : num_classes(classes),
        counts(static_cast<size_t>(classes) * static_cast<size_t>(classes), 0) {}

  int64_t& at(int gold, int pred) {
    return counts[static_cast<size_t>(gold) * num_classes + pred];
  }
  int64_t at(int gold, int pred) const {
    return counts[static_cast<size_t>(gold) * num_classes + pred];
  }
  int64_t total() const;
};

ConfusionMatrix confusion_matrix(const std::vector<int>& gold,
                                 const std::vector<int>& pred,
                                 int num_classes);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  int64_t gold_support = 0;
  int64_t predicted_count = 0;
};

struct MetricsRecord {
  std::vector<ClassMetrics> per_class;
  double macro_f1 = 0.0;     // mean F1 over classes with gold support
  double weighted_f1 = 0.0;  // gold-support-weighted mean F1
  double accuracy = 0.0;     // trace / total
};

// A class with zero predictions scores precision 0; a class with zero gold
// support scores F1 0 and is excluded from the macro average (it cannot be
// recalled). Throws DataError on an all-zero matrix.
MetricsRecord f1_scores(const ConfusionMatrix& matrix);

// Runs the classifier over the given example indices (dropout off, no
// gradients), takes argmax per example with ties to the lowest class index,
// and scores predictions against gold labels.
MetricsRecord evaluate_model(EncoderModel& model, const Vocabulary& vocab,
                             const LabeledDataset& ds,
                             const std::vector<int64_t>& indices, int max_len,
                             int batch_size);

// The per-example predictions behind evaluate_model, for callers that need
// them (error analysis, tests).
std::vector<int> predict_labels(EncoderModel& model, const Vocabulary& vocab,
                                const LabeledDataset& ds,
                                const std::vector<int64_t>& indices,
                                int max_len, int batch_size);

}  // namespace dapt
