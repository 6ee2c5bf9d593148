#include "core/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>

#include "core/ops.hpp"
#include "core/util.hpp"

namespace dapt {

namespace {

// Sub-stream tag for classifier-head initialization, separated from the
// epoch streams which use small integers.
constexpr uint64_t kHeadStream = 0x68656164;  // "head"

double elapsed_seconds(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
      .count();
}

}  // namespace

TrainConfig TrainConfig::posttrain() {
  TrainConfig c;
  c.epochs = 20;
  c.batch_size = 8;
  return c;
}

TrainConfig TrainConfig::finetune_sentiment() {
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 8;
  return c;
}

TrainConfig TrainConfig::finetune_indofinsent() {
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 16;
  return c;
}

TrainConfig TrainConfig::finetune_topic() {
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 8;
  return c;
}

TrainConfig TrainConfig::preset(const std::string& name) {
  if (name == "posttrain") return posttrain();
  if (name == "finetune-sentiment") return finetune_sentiment();
  if (name == "finetune-indofinsent") return finetune_indofinsent();
  if (name == "finetune-topic") return finetune_topic();
  throw ConfigError("unknown train preset '" + name +
                    "' (expected posttrain, finetune-sentiment, "
                    "finetune-indofinsent, or finetune-topic)");
}

void TrainConfig::validate() const {
  if (epochs < 1) {
    throw ConfigError("train config: epochs must be >= 1, got " +
                      std::to_string(epochs));
  }
  if (batch_size < 1) {
    throw ConfigError("train config: batch_size must be >= 1, got " +
                      std::to_string(batch_size));
  }
  if (!(learning_rate > 0.0f)) {
    throw ConfigError("train config: learning_rate must be positive");
  }
  if (!(weight_decay >= 0.0f)) {
    throw ConfigError("train config: weight_decay must be non-negative");
  }
  if (!(mlm_probability >= 0.0f) || mlm_probability > 1.0f) {
    throw ConfigError("train config: mlm_probability must be in [0, 1]");
  }
  if (max_len < 3) {
    throw ConfigError("train config: max_len must be >= 3, got " +
                      std::to_string(max_len));
  }
}

MaskedBatch mask_tokens(const Batch& batch, const Vocabulary& vocab,
                        float mlm_probability, Rng& rng) {
  MaskedBatch out;
  out.input_ids = batch.ids;
  out.labels.assign(batch.ids.size(), kIgnoreIndex);
  if (mlm_probability <= 0.0f) return out;

  int vocab_size = vocab.size();
  int64_t non_special = vocab_size - (Vocabulary::kMask + 1);
  for (size_t i = 0; i < batch.ids.size(); ++i) {
    int id = batch.ids[i];
    if (batch.mask[i] == 0.0f || vocab.is_special(id)) continue;
    if (uniform_real(rng) >= mlm_probability) continue;
    out.labels[i] = id;
    double r = uniform_real(rng);
    if (r < 0.8) {
      out.input_ids[i] = Vocabulary::kMask;
    } else if (r < 0.9 && non_special > 0) {
      out.input_ids[i] = Vocabulary::kMask + 1 +
                         static_cast<int>(uniform_index(rng, non_special));
    }
    // else: keep the original token; the label still marks it selected.
  }
  return out;
}

void materialize_missing_grads(ParameterSet& params) {
  for (NamedParam& p : params) {
    if (!p.tensor.has_grad()) p.tensor.impl()->ensure_grad();
  }
}

namespace {

int64_t live_label_count(const std::vector<int>& labels) {
  int64_t n = 0;
  for (int label : labels) {
    if (label != kIgnoreIndex) ++n;
  }
  return n;
}

}  // namespace

std::vector<double> posttrain_mlm(EncoderModel& model, AdamW& optimizer,
                                  TrainingMeta& meta, const Vocabulary& vocab,
                                  const std::vector<std::string>& corpus,
                                  const TrainConfig& config,
                                  const std::string& checkpoint_dir,
                                  std::ostream* log) {
  config.validate();
  if (corpus.empty()) throw DataError("posttrain: empty corpus");
  if (model.config().vocab_size != vocab.size()) {
    throw ConfigError("posttrain: model vocab_size " +
                      std::to_string(model.config().vocab_size) +
                      " does not match vocabulary size " +
                      std::to_string(vocab.size()));
  }
  if (meta.epochs_completed > 0 && meta.seed != config.seed) {
    throw ConfigError("posttrain: resuming with seed " +
                      std::to_string(config.seed) +
                      " but the checkpoint was trained with seed " +
                      std::to_string(meta.seed));
  }
  meta.seed = config.seed;

  std::vector<TokenSequence> encoded;
  encoded.reserve(corpus.size());
  for (const std::string& sentence : corpus) {
    encoded.push_back(encode(vocab, sentence, config.max_len));
  }

  std::vector<int64_t> order(corpus.size());
  for (int64_t e = meta.epochs_completed + 1; e <= config.epochs; ++e) {
    auto start = std::chrono::steady_clock::now();
    // One stream per epoch, consumed in a fixed order (shuffle, then per
    // batch: masking then dropout), so training can resume mid-run without
    // replaying earlier epochs.
    Rng rng = make_rng(mix_seed(config.seed, static_cast<uint64_t>(e)));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    int64_t masked_total = 0;
    for (size_t begin = 0; begin < order.size();
         begin += static_cast<size_t>(config.batch_size)) {
      size_t end = std::min(order.size(),
                            begin + static_cast<size_t>(config.batch_size));
      std::vector<TokenSequence> seqs;
      seqs.reserve(end - begin);
      for (size_t i = begin; i < end; ++i) {
        seqs.push_back(encoded[static_cast<size_t>(order[i])]);
      }
      Batch batch = Batch::from_sequences(seqs);
      MaskedBatch masked = mask_tokens(batch, vocab, config.mlm_probability, rng);
      batch.ids = masked.input_ids;

      Tensor hidden = model.forward(batch, true, rng);
      Tensor logits = model.mlm_logits(hidden);
      int64_t rows = batch.batch_size * batch.seq_len;
      logits = reshape(logits, {rows, model.config().vocab_size});
      Tensor loss = cross_entropy(logits, masked.labels, kIgnoreIndex);

      int64_t live = live_label_count(masked.labels);
      if (live > 0) {
        backward(loss);
        materialize_missing_grads(model.parameters());
        optimizer.step(model.parameters());
        zero_grads(model.parameters());
        loss_sum += loss.item() * static_cast<double>(live);
        masked_total += live;
      }
    }

    double epoch_loss =
        masked_total > 0 ? loss_sum / static_cast<double>(masked_total) : 0.0;
    meta.loss_history.push_back(epoch_loss);
    meta.epochs_completed = e;

    if (!checkpoint_dir.empty()) {
      OptimizerState state{optimizer.step_count(), optimizer.config(),
                           optimizer.slots()};
      save_checkpoint(checkpoint_dir + "/epoch_" + std::to_string(e) + ".ckpt",
                      model, &state, meta);
    }
    if (log != nullptr) {
      char line[96];
      std::snprintf(line, sizeof(line), "%lld\t%.6f\t%.3f\n",
                    static_cast<long long>(e), epoch_loss,
                    elapsed_seconds(start));
      (*log) << line << std::flush;
    }
  }
  return meta.loss_history;
}

std::vector<double> posttrain_mlm_fresh(EncoderModel& model,
                                        const Vocabulary& vocab,
                                        const std::vector<std::string>& corpus,
                                        const TrainConfig& config,
                                        const std::string& checkpoint_dir,
                                        std::ostream* log) {
  AdamW optimizer(AdamWConfig{config.learning_rate, config.weight_decay,
                              0.9f, 0.999f, 1e-8f});
  TrainingMeta meta;
  meta.seed = config.seed;
  return posttrain_mlm(model, optimizer, meta, vocab, corpus, config,
                       checkpoint_dir, log);
}

std::vector<int64_t> subset_training_data(const LabeledDataset& ds,
                                          const std::vector<int64_t>& split,
                                          double fraction, uint64_t seed,
                                          bool stratified) {
  if (!(fraction > 0.0) || fraction > 1.0) {
    throw ConfigError("subset_training_data: fraction must be in (0, 1], got " +
                      std::to_string(fraction));
  }
  if (split.empty()) throw DataError("subset_training_data: empty split");
  if (fraction == 1.0) return split;

  auto take_prefix = [](std::vector<int64_t> indices, Rng rng, int64_t count) {
    std::shuffle(indices.begin(), indices.end(), rng);
    indices.resize(static_cast<size_t>(count));
    return indices;
  };

  std::vector<int64_t> chosen;
  if (stratified) {
    for (int label = 0; label < ds.num_labels(); ++label) {
      std::vector<int64_t> members;
      for (int64_t idx : split) {
        if (ds.examples[static_cast<size_t>(idx)].label == label) {
          members.push_back(idx);
        }
      }
      if (members.empty()) continue;
      int64_t count = std::max<int64_t>(
          1, round_half_up_to_int(fraction *
                                  static_cast<double>(members.size())));
      count = std::min<int64_t>(count, static_cast<int64_t>(members.size()));
      auto picked =
          take_prefix(std::move(members),
                      make_rng(mix_seed(seed, static_cast<uint64_t>(label))),
                      count);
      chosen.insert(chosen.end(), picked.begin(), picked.end());
    }
  } else {
    int64_t count = std::max<int64_t>(
        1,
        round_half_up_to_int(fraction * static_cast<double>(split.size())));
    count = std::min<int64_t>(count, static_cast<int64_t>(split.size()));
    chosen = take_prefix(split, make_rng(seed), count);
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

namespace {

// Mean classification loss over a split without touching gradients or rng.
double eval_loss(EncoderModel& model, const Vocabulary& vocab,
                 const LabeledDataset& ds, const std::vector<int64_t>& indices,
                 const TrainConfig& config) {
  NoGradGuard no_grad;
  Rng unused = make_rng(0);
  double loss_sum = 0.0;
  for (size_t begin = 0; begin < indices.size();
       begin += static_cast<size_t>(config.batch_size)) {
    size_t end =
        std::min(indices.size(), begin + static_cast<size_t>(config.batch_size));
    std::vector<TokenSequence> seqs;
    std::vector<int> labels;
    for (size_t i = begin; i < end; ++i) {
      const auto& ex = ds.examples[static_cast<size_t>(indices[i])];
      seqs.push_back(encode(vocab, ex.text, config.max_len));
      labels.push_back(ex.label);
    }
    Batch batch = Batch::from_sequences(seqs);
    Tensor hidden = model.forward(batch, false, unused);
    Tensor logits = model.classify_logits(hidden, false, unused);
    Tensor loss = cross_entropy(logits, labels, kIgnoreIndex);
    loss_sum += loss.item() * static_cast<double>(end - begin);
  }
  return loss_sum / static_cast<double>(indices.size());
}

}  // namespace

std::vector<FinetuneEpoch> finetune_classifier(
    EncoderModel& model, const Vocabulary& vocab, const LabeledDataset& ds,
    const std::vector<int64_t>& train_idx, const std::vector<int64_t>& val_idx,
    const TrainConfig& config, int num_labels, std::ostream* log) {
  config.validate();
  if (train_idx.empty()) throw DataError("finetune: empty training split");
  if (model.config().vocab_size != vocab.size()) {
    throw ConfigError("finetune: model vocab_size " +
                      std::to_string(model.config().vocab_size) +
                      " does not match vocabulary size " +
                      std::to_string(vocab.size()));
  }
  if (!model.has_classifier()) {
    model.attach_classifier(num_labels, mix_seed(config.seed, kHeadStream));
  } else if (model.config().num_labels != num_labels) {
    throw ConfigError("finetune: model head has " +
                      std::to_string(model.config().num_labels) +
                      " labels, expected " + std::to_string(num_labels));
  }
  for (const std::vector<int64_t>* split : {&train_idx, &val_idx}) {
    for (int64_t idx : *split) {
      int label = ds.examples[static_cast<size_t>(idx)].label;
      if (label < 0 || label >= num_labels) {
        throw DataError("finetune: example " + std::to_string(idx) +
                        " has label " + std::to_string(label) +
                        ", expected 0.." + std::to_string(num_labels - 1));
      }
    }
  }

  AdamW optimizer(AdamWConfig{config.learning_rate, config.weight_decay, 0.9f,
                              0.999f, 1e-8f});
  std::vector<FinetuneEpoch> history;
  std::vector<int64_t> order = train_idx;

  for (int64_t e = 1; e <= config.epochs; ++e) {
    auto start = std::chrono::steady_clock::now();
    Rng rng = make_rng(mix_seed(config.seed, static_cast<uint64_t>(e)));
    order = train_idx;
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    for (size_t begin = 0; begin < order.size();
         begin += static_cast<size_t>(config.batch_size)) {
      size_t end =
          std::min(order.size(), begin + static_cast<size_t>(config.batch_size));
      std::vector<TokenSequence> seqs;
      std::vector<int> labels;
      for (size_t i = begin; i < end; ++i) {
        const auto& ex = ds.examples[static_cast<size_t>(order[i])];
        seqs.push_back(encode(vocab, ex.text, config.max_len));
        labels.push_back(ex.label);
      }
      Batch batch = Batch::from_sequences(seqs);
      Tensor hidden = model.forward(batch, true, rng);
      Tensor logits = model.classify_logits(hidden, true, rng);
      Tensor loss = cross_entropy(logits, labels, kIgnoreIndex);

      backward(loss);
      materialize_missing_grads(model.parameters());
      optimizer.step(model.parameters());
      zero_grads(model.parameters());
      loss_sum += loss.item() * static_cast<double>(end - begin);
    }

    FinetuneEpoch entry;
    entry.epoch = e;
    entry.train_loss = loss_sum / static_cast<double>(order.size());
    entry.has_val = !val_idx.empty();
    if (entry.has_val) {
      entry.val_loss = eval_loss(model, vocab, ds, val_idx, config);
    }
    entry.wall_seconds = elapsed_seconds(start);
    history.push_back(entry);

    if (log != nullptr) {
      char line[128];
      if (entry.has_val) {
        std::snprintf(line, sizeof(line), "%lld\t%.6f\t%.6f\t%.3f\n",
                      static_cast<long long>(e), entry.train_loss,
                      entry.val_loss, entry.wall_seconds);
      } else {
        std::snprintf(line, sizeof(line), "%lld\t%.6f\t-\t%.3f\n",
                      static_cast<long long>(e), entry.train_loss,
                      entry.wall_seconds);
      }
      (*log) << line << std::flush;
    }
  }
  return history;
}

}  // namespace dapt
