#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "core/adamw.hpp"
#include "core/checkpoint.hpp"
#include "core/dataset.hpp"
#include "core/model.hpp"
#include "core/wordpiece.hpp"

namespace dapt {

// Label value marking positions that do not contribute to the loss.
constexpr int kIgnoreIndex = -1;

struct TrainConfig {
  int epochs = 0;
  int batch_size = 8;
  float learning_rate = 2e-5f;
  float weight_decay = 0.01f;
  float mlm_probability = 0.15f;
  uint64_t seed = 42;
  int max_len = 128;

  // Published recipes: masked-language-model post-training runs 20 epochs at
  // batch 8; classifier fine-tuning runs 2 epochs, with batch 16 on the
  // IndoFinSent task and batch 8 elsewhere. All share lr 2e-5, decay 0.01.
  static TrainConfig posttrain();
  static TrainConfig finetune_sentiment();
  static TrainConfig finetune_indofinsent();
  static TrainConfig finetune_topic();
  static TrainConfig preset(const std::string& name);

  void validate() const;  // throws ConfigError
};

// A batch after MLM corruption: input ids with 80% of selected positions
// replaced by [MASK], 10% by a random non-special token, 10% kept; labels
// hold the original id exactly at selected positions and kIgnoreIndex
// elsewhere. Special-token positions are never selected.
struct MaskedBatch {
  std::vector<int> input_ids;  // same layout as Batch::ids
  std::vector<int> labels;
};

MaskedBatch mask_tokens(const Batch& batch, const Vocabulary& vocab,
                        float mlm_probability, Rng& rng);

// Fills logically-zero gradient buffers for parameters the current loss does
// not reach (the MLM head during fine-tuning), so the optimizer sees a full
// gradient set.
void materialize_missing_grads(ParameterSet& params);

// MLM training from the model's current position: runs epochs
// meta.epochs_completed+1 .. config.epochs, updating model/optimizer/meta in
// place, and returns the full per-epoch mean-loss history. Per epoch the
// seeded stream drives, in order: the sentence shuffle, per-batch masking,
// and dropout — which is what makes a resumed run bitwise-identical to an
// uninterrupted one. Writes epoch_<n>.ckpt into checkpoint_dir (empty string
// = no checkpoints) and one "epoch<TAB>loss<TAB>seconds" line per epoch to
// `log` (nullptr = silent).
std::vector<double> posttrain_mlm(EncoderModel& model, AdamW& optimizer,
                                  TrainingMeta& meta, const Vocabulary& vocab,
                                  const std::vector<std::string>& corpus,
                                  const TrainConfig& config,
                                  const std::string& checkpoint_dir,
                                  std::ostream* log);

// Convenience for a fresh run: builds the optimizer and metadata from the
// config and trains from epoch 1.
std::vector<double> posttrain_mlm_fresh(EncoderModel& model,
                                        const Vocabulary& vocab,
                                        const std::vector<std::string>& corpus,
                                        const TrainConfig& config,
                                        const std::string& checkpoint_dir,
                                        std::ostream* log);

// Stratified sampling without replacement from one split: per class,
// round-half-up(fraction x class count) examples, at least 1 per class
// present. fraction 1.0 returns the split untouched; smaller fractions
// return ascending indices. `stratified=false` samples uniformly instead.
std::vector<int64_t> subset_training_data(const LabeledDataset& ds,
                                          const std::vector<int64_t>& split,
                                          double fraction, uint64_t seed,
                                          bool stratified = true);

struct FinetuneEpoch {
  int64_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  bool has_val = false;
  double wall_seconds = 0.0;
};

// Full fine-tuning (every weight updates) of a classification head over
// [CLS], for config.epochs epochs, returning the final-epoch model in place
// (no best-epoch selection). Attaches a fresh head when the model has none.
// Logs "epoch<TAB>train<TAB>val<TAB>seconds" lines.
std::vector<FinetuneEpoch> finetune_classifier(
    EncoderModel& model, const Vocabulary& vocab, const LabeledDataset& ds,
    const std::vector<int64_t>& train_idx, const std::vector<int64_t>& val_idx,
    const TrainConfig& config, int num_labels, std::ostream* log);

}  // namespace dapt
