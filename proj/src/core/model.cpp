#include "core/model.hpp"

#include <cmath>
#include <numeric>
#include <string_view>

#include "core/ops.hpp"
#include "core/util.hpp"

namespace dapt {

namespace {

constexpr float kLayerNormEpsilon = 1e-12f;
constexpr float kInitStd = 0.02f;

ModelConfig shape_preset(int layers, int heads, int emb, int hidden, int ffn,
                         int vocab_size, int max_position) {
  ModelConfig c;
  c.num_layers = layers;
  c.num_heads = heads;
  c.emb_size = emb;
  c.hidden_size = hidden;
  c.ffn_size = ffn;
  c.vocab_size = vocab_size;
  c.max_position = max_position;
  return c;
}

}  // namespace

ModelConfig ModelConfig::tiny(int vocab_size) {
  return shape_preset(2, 2, 64, 64, 128, vocab_size, 128);
}

ModelConfig ModelConfig::base(int vocab_size) {
  return shape_preset(12, 12, 768, 768, 3072, vocab_size, 512);
}

ModelConfig ModelConfig::large(int vocab_size) {
  return shape_preset(24, 16, 1024, 1024, 4096, vocab_size, 512);
}

ModelConfig ModelConfig::preset(const std::string& name, int vocab_size) {
  if (name == "tiny") return tiny(vocab_size);
  if (name == "base") return base(vocab_size);
  if (name == "large") return large(vocab_size);
  throw ConfigError("unknown model preset '" + name +
                    "' (expected tiny, base, or large)");
}

void ModelConfig::validate() const {
  auto require_positive = [](int value, const char* what) {
    if (value <= 0) {
      throw ConfigError(std::string("model config: ") + what +
                        " must be positive, got " + std::to_string(value));
    }
  };
  require_positive(num_layers, "num_layers");
  require_positive(num_heads, "num_heads");
  require_positive(emb_size, "emb_size");
  require_positive(hidden_size, "hidden_size");
  require_positive(ffn_size, "ffn_size");
  require_positive(vocab_size, "vocab_size");
  require_positive(max_position, "max_position");
  if (hidden_size % num_heads != 0) {
    throw ConfigError("model config: hidden_size " +
                      std::to_string(hidden_size) +
                      " is not divisible by num_heads " +
                      std::to_string(num_heads));
  }
  if (num_labels < 0 || num_labels == 1) {
    throw ConfigError("model config: num_labels must be 0 (no head) or >= 2, "
                      "got " + std::to_string(num_labels));
  }
  if (!(dropout_prob >= 0.0f) || dropout_prob >= 1.0f) {
    throw ConfigError("model config: dropout_prob must be in [0, 1), got " +
                      std::to_string(dropout_prob));
  }
  if (max_position < 3) {
    throw ConfigError("model config: max_position must fit [CLS] x [SEP], "
                      "got " + std::to_string(max_position));
  }
}

std::vector<ParamSpec> parameter_spec(const ModelConfig& config) {
  config.validate();
  int64_t V = config.vocab_size;
  int64_t P = config.max_position;
  int64_t E = config.emb_size;
  int64_t H = config.hidden_size;
  int64_t F = config.ffn_size;

  std::vector<ParamSpec> spec;
  spec.push_back({"embeddings.token", {V, E}});
  spec.push_back({"embeddings.position", {P, E}});
  spec.push_back({"embeddings.norm.gain", {E}});
  spec.push_back({"embeddings.norm.bias", {E}});
  if (E != H) {
    spec.push_back({"embeddings.proj.weight", {E, H}});
    spec.push_back({"embeddings.proj.bias", {H}});
  }
  for (int layer = 0; layer < config.num_layers; ++layer) {
    std::string p = "layer." + std::to_string(layer) + ".";
    for (const char* name : {"query", "key", "value", "out"}) {
      spec.push_back({p + "attn." + name + ".weight", {H, H}});
      spec.push_back({p + "attn." + name + ".bias", {H}});
    }
    spec.push_back({p + "attn.norm.gain", {H}});
    spec.push_back({p + "attn.norm.bias", {H}});
    spec.push_back({p + "ffn.inner.weight", {H, F}});
    spec.push_back({p + "ffn.inner.bias", {F}});
    spec.push_back({p + "ffn.out.weight", {F, H}});
    spec.push_back({p + "ffn.out.bias", {H}});
    spec.push_back({p + "ffn.norm.gain", {H}});
    spec.push_back({p + "ffn.norm.bias", {H}});
  }
  if (config.tie_mlm_head) {
    if (E != H) {
      spec.push_back({"mlm.proj.weight", {H, E}});
      spec.push_back({"mlm.proj.bias", {E}});
    }
  } else {
    spec.push_back({"mlm.weight", {H, V}});
  }
  spec.push_back({"mlm.bias", {V}});
  if (config.num_labels > 0) {
    spec.push_back({"classifier.weight", {H, config.num_labels}});
    spec.push_back({"classifier.bias", {config.num_labels}});
  }
  return spec;
}

int64_t parameter_count(const ModelConfig& config) {
  int64_t total = 0;
  for (const ParamSpec& p : parameter_spec(config)) {
    total += shape_numel(p.shape);
  }
  return total;
}

namespace {

bool is_zero_init(std::string_view name) {
  return name.ends_with(".bias");
}

bool is_one_init(std::string_view name) {
  return name.ends_with("norm.gain");
}

Tensor init_param(const ParamSpec& spec, Rng& rng) {
  if (is_zero_init(spec.name)) return Tensor::zeros(spec.shape, true);
  if (is_one_init(spec.name)) return Tensor::full(spec.shape, 1.0f, true);
  Tensor t = Tensor::zeros(spec.shape, true);
  for (float& v : t.values_mut()) v = truncated_normal(rng, kInitStd);
  return t;
}

}  // namespace

EncoderModel::EncoderModel(const ModelConfig& config, uint64_t seed)
    : config_(config) {
  Rng rng = make_rng(seed);
  for (const ParamSpec& spec : parameter_spec(config_)) {
    params_.push_back({spec.name, init_param(spec, rng)});
  }
  index_params();
}

EncoderModel::EncoderModel(const ModelConfig& config,
                           std::vector<NamedParam> params)
    : config_(config), params_(std::move(params)) {
  auto spec = parameter_spec(config_);
  if (spec.size() != params_.size()) {
    throw DataError("model: expected " + std::to_string(spec.size()) +
                    " parameters for this config, got " +
                    std::to_string(params_.size()));
  }
  for (size_t i = 0; i < spec.size(); ++i) {
    if (params_[i].name != spec[i].name) {
      throw DataError("model: parameter " + std::to_string(i) + " is '" +
                      params_[i].name + "', expected '" + spec[i].name + "'");
    }
    if (params_[i].tensor.shape() != spec[i].shape) {
      throw DataError("model: parameter '" + spec[i].name + "' has shape " +
                      shape_str(params_[i].tensor.shape()) + ", expected " +
                      shape_str(spec[i].shape));
    }
    params_[i].tensor.set_requires_grad(true);
  }
  index_params();
}

void EncoderModel::index_params() {
  by_name_.clear();
  for (size_t i = 0; i < params_.size(); ++i) {
    by_name_[params_[i].name] = i;
  }
}

Tensor& EncoderModel::param(const std::string& name) {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) {
    throw std::logic_error("model: no parameter named '" + name + "'");
  }
  return params_[it->second].tensor;
}

const Tensor& EncoderModel::param(const std::string& name) const {
  return const_cast<EncoderModel*>(this)->param(name);
}

int64_t EncoderModel::parameter_count() const {
  int64_t total = 0;
  for (const NamedParam& p : params_) total += p.tensor.numel();
  return total;
}

Batch Batch::from_sequences(const std::vector<TokenSequence>& seqs) {
  if (seqs.empty()) throw DataError("batch: no sequences");
  Batch batch;
  batch.batch_size = static_cast<int64_t>(seqs.size());
  batch.seq_len = static_cast<int64_t>(seqs[0].ids.size());
  batch.ids.reserve(static_cast<size_t>(batch.batch_size * batch.seq_len));
  batch.mask.reserve(batch.ids.capacity());
  for (const TokenSequence& seq : seqs) {
    if (static_cast<int64_t>(seq.ids.size()) != batch.seq_len) {
      throw DataError("batch: sequences have differing lengths " +
                      std::to_string(batch.seq_len) + " and " +
                      std::to_string(seq.ids.size()));
    }
    batch.ids.insert(batch.ids.end(), seq.ids.begin(), seq.ids.end());
    for (uint8_t m : seq.attention_mask) {
      batch.mask.push_back(m ? 1.0f : 0.0f);
    }
  }
  return batch;
}

Tensor EncoderModel::forward(const Batch& batch, bool train_mode, Rng& rng) {
  int64_t B = batch.batch_size;
  int64_t L = batch.seq_len;
  if (B <= 0 || L <= 0 ||
      batch.ids.size() != static_cast<size_t>(B * L) ||
      batch.mask.size() != static_cast<size_t>(B * L)) {
    throw DataError("forward: inconsistent batch buffers");
  }
  if (L > config_.max_position) {
    throw DataError("forward: sequence length " + std::to_string(L) +
                    " exceeds max_position " +
                    std::to_string(config_.max_position));
  }
  float p = config_.dropout_prob;

  // Embeddings: token + position, layer norm over emb_size, then (only when
  // the embedding width differs from the hidden width) a linear projection.
  Tensor tok = embedding_lookup(param("embeddings.token"), batch.ids);
  tok = reshape(tok, {B, L, config_.emb_size});
  std::vector<int> positions(static_cast<size_t>(L));
  std::iota(positions.begin(), positions.end(), 0);
  Tensor pos = embedding_lookup(param("embeddings.position"), positions);
  Tensor h = add(tok, pos);
  h = layer_norm(h, param("embeddings.norm.gain"), param("embeddings.norm.bias"),
                 kLayerNormEpsilon);
  if (config_.emb_size != config_.hidden_size) {
    h = add(matmul(h, param("embeddings.proj.weight")),
            param("embeddings.proj.bias"));
  }
  h = dropout(h, p, rng, train_mode);

  // Additive attention bias per key: 0 for live tokens, -1e9 for padding, so
  // softmax assigns padding exactly zero weight.
  std::vector<float> key_bias(batch.mask.size());
  for (size_t i = 0; i < key_bias.size(); ++i) {
    key_bias[i] = batch.mask[i] > 0.0f ? 0.0f : -1e9f;
  }

  int heads = config_.num_heads;
  float inv_sqrt_dh =
      1.0f / std::sqrt(static_cast<float>(config_.hidden_size / heads));

  for (int layer = 0; layer < config_.num_layers; ++layer) {
    std::string prefix = "layer." + std::to_string(layer) + ".";
    auto attn_param = [&](const char* name) -> Tensor& {
      return param(prefix + "attn." + name);
    };

    Tensor q = add(matmul(h, attn_param("query.weight")),
                   attn_param("query.bias"));
    Tensor k = add(matmul(h, attn_param("key.weight")), attn_param("key.bias"));
    Tensor v = add(matmul(h, attn_param("value.weight")),
                   attn_param("value.bias"));
    Tensor scores = matmul(split_heads(q, heads),
                           transpose_last2(split_heads(k, heads)));
    scores = scale(scores, inv_sqrt_dh);
    scores = add_key_bias(scores, key_bias, B, heads);
    Tensor attn = softmax(scores, 2);
    attn = dropout(attn, p, rng, train_mode);
    Tensor context = merge_heads(matmul(attn, split_heads(v, heads)), heads);
    Tensor attn_out = add(matmul(context, attn_param("out.weight")),
                          attn_param("out.bias"));
    attn_out = dropout(attn_out, p, rng, train_mode);
    h = layer_norm(add(h, attn_out), param(prefix + "attn.norm.gain"),
                   param(prefix + "attn.norm.bias"), kLayerNormEpsilon);

    Tensor inner = gelu(add(matmul(h, param(prefix + "ffn.inner.weight")),
                            param(prefix + "ffn.inner.bias")));
    Tensor ffn_out = add(matmul(inner, param(prefix + "ffn.out.weight")),
                         param(prefix + "ffn.out.bias"));
    ffn_out = dropout(ffn_out, p, rng, train_mode);
    h = layer_norm(add(h, ffn_out), param(prefix + "ffn.norm.gain"),
                   param(prefix + "ffn.norm.bias"), kLayerNormEpsilon);
  }
  return h;
}

Tensor EncoderModel::mlm_logits(const Tensor& hidden) {
  if (hidden.rank() != 3 ||
      hidden.shape()[2] != config_.hidden_size) {
    throw std::invalid_argument("mlm_logits: expected (batch, seq, " +
                                std::to_string(config_.hidden_size) +
                                ") hidden states, got " +
                                shape_str(hidden.shape()));
  }
  Tensor h = hidden;
  if (config_.tie_mlm_head) {
    if (config_.emb_size != config_.hidden_size) {
      h = add(matmul(h, param("mlm.proj.weight")), param("mlm.proj.bias"));
    }
    Tensor tied = transpose_last2(param("embeddings.token"));
    return add(matmul(h, tied), param("mlm.bias"));
  }
  return add(matmul(h, param("mlm.weight")), param("mlm.bias"));
}

Tensor EncoderModel::classify_logits(const Tensor& hidden, bool train_mode,
                                     Rng& rng) {
  if (!has_classifier()) {
    throw ConfigError("classify_logits: model has no classifier head "
                      "(attach one with num_labels >= 2 first)");
  }
  Tensor cls = take_position(hidden, 0);
  cls = dropout(cls, config_.dropout_prob, rng, train_mode);
  return add(matmul(cls, param("classifier.weight")), param("classifier.bias"));
}

void EncoderModel::attach_classifier(int num_labels, uint64_t seed) {
  if (has_classifier()) {
    throw ConfigError("attach_classifier: model already has a classifier head");
  }
  if (num_labels < 2) {
    throw ConfigError("attach_classifier: num_labels must be >= 2, got " +
                      std::to_string(num_labels));
  }
  Rng rng = make_rng(seed);
  ParamSpec weight{"classifier.weight", {config_.hidden_size, num_labels}};
  ParamSpec bias{"classifier.bias", {num_labels}};
  params_.push_back({weight.name, init_param(weight, rng)});
  params_.push_back({bias.name, init_param(bias, rng)});
  config_.num_labels = num_labels;
  index_params();
}

}  // namespace dapt
