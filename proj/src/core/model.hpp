#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "core/adamw.hpp"
#include "core/rng.hpp"
#include "core/tensor.hpp"
#include "core/wordpiece.hpp"

namespace dapt {

// Shape of the encoder. Presets cover the two published sizes plus a tiny
// shape for desk-scale experiments; vocab_size always comes from the
// tokenizer that will feed the model.
struct ModelConfig {
  int num_layers = 0;
  int num_heads = 0;
  int emb_size = 0;
  int hidden_size = 0;
  int ffn_size = 0;
  int vocab_size = 0;
  int max_position = 128;
  int num_labels = 0;  // 0 = no classifier head
  float dropout_prob = 0.1f;
  bool tie_mlm_head = true;

  static ModelConfig tiny(int vocab_size);
  static ModelConfig base(int vocab_size);
  static ModelConfig large(int vocab_size);
  static ModelConfig preset(const std::string& name, int vocab_size);

  // Throws ConfigError naming the violated constraint.
  void validate() const;

  bool operator==(const ModelConfig& other) const = default;
};

struct ParamSpec {
  std::string name;
  Shape shape;
};

// The full ordered list of parameter names and shapes implied by a config.
// Initialization, checkpoint validation, and the parameter-count formula all
// derive from this single description.
std::vector<ParamSpec> parameter_spec(const ModelConfig& config);
int64_t parameter_count(const ModelConfig& config);

// A padded (batch, seq_len) block of token ids with a 0/1 attention mask.
struct Batch {
  int64_t batch_size = 0;
  int64_t seq_len = 0;
  std::vector<int> ids;      // row-major (batch, seq_len)
  std::vector<float> mask;   // 1 = live token, 0 = padding

  static Batch from_sequences(const std::vector<TokenSequence>& seqs);
};

// BERT-style bidirectional encoder: token+position embeddings with layer
// norm, then per layer multi-head self-attention and a GELU feed-forward
// block, each with residual + layer norm. Heads: masked-language-model
// logits (tied to the token embeddings by default) and an optional [CLS]
// classifier.
class EncoderModel {
 public:
  // Fresh model: weights from a truncated normal (std 0.02, clipped at two
  // standard deviations), biases zero, layer-norm gains one.
  EncoderModel(const ModelConfig& config, uint64_t seed);

  // Adopts existing parameter tensors (checkpoint load). `params` must match
  // parameter_spec(config) in names, order, and shapes.
  EncoderModel(const ModelConfig& config, std::vector<NamedParam> params);

  const ModelConfig& config() const { return config_; }
  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }
  int64_t parameter_count() const;
  bool has_classifier() const { return config_.num_labels > 0; }

  Tensor& param(const std::string& name);
  const Tensor& param(const std::string& name) const;

  // (batch, seq_len) ids -> (batch, seq_len, hidden) states. Dropout draws
  // from `rng` only in train mode; pass any rng otherwise.
  Tensor forward(const Batch& batch, bool train_mode, Rng& rng);

  // (batch, seq_len, hidden) -> (batch, seq_len, vocab) token logits.
  Tensor mlm_logits(const Tensor& hidden);

  // (batch, seq_len, hidden) -> (batch, num_labels) logits from the [CLS]
  // position (dropout + linear). Throws ConfigError without a classifier.
  Tensor classify_logits(const Tensor& hidden, bool train_mode, Rng& rng);

  // Adds a freshly initialized classifier head to a model that has none;
  // this is the fine-tuning entry point for post-trained checkpoints.
  void attach_classifier(int num_labels, uint64_t seed);

 private:
  void index_params();

  ModelConfig config_;
  ParameterSet params_;
  std::unordered_map<std::string, size_t> by_name_;
};

}  // namespace dapt
