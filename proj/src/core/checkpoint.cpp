#include "core/checkpoint.hpp"

#include <charconv>
#include <cstdio>
#include <cstring>
#include <set>

#include "core/util.hpp"

namespace dapt {

namespace {

constexpr char kMagic[4] = {'D', 'A', 'P', 'T'};
constexpr uint32_t kFormatVersion = 1;

// ---- little-endian writer ----

struct Writer {
  std::string buf;

  void bytes(const void* data, size_t len) {
    buf.append(static_cast<const char*>(data), len);
  }
  void u8(uint8_t v) { bytes(&v, 1); }
  void u32(uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    bytes(b, 4);
  }
  void u64(uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    bytes(b, 8);
  }
  void i64(int64_t v) { u64(static_cast<uint64_t>(v)); }
  void f32(float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
  void f64(double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    u64(bits);
  }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void f32_span(std::span<const float> values) {
    u64(values.size());
    for (float v : values) f32(v);
  }
};

// ---- bounds-checked little-endian reader ----

struct Reader {
  const std::string& buf;
  const std::string& path;
  size_t pos = 0;
  size_t end = 0;

  void need(size_t n) const {
    if (pos + n > end) {
      throw DataError(path + ": checkpoint record truncated");
    }
  }
  void bytes(void* out, size_t n) {
    need(n);
    std::memcpy(out, buf.data() + pos, n);
    pos += n;
  }
  uint8_t u8() {
    uint8_t v;
    bytes(&v, 1);
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<uint32_t>(static_cast<unsigned char>(buf[pos + i]))
           << (8 * i);
    }
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<uint64_t>(static_cast<unsigned char>(buf[pos + i]))
           << (8 * i);
    }
    pos += 8;
    return v;
  }
  int64_t i64() { return static_cast<int64_t>(u64()); }
  float f32() {
    uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  double f64() {
    uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str() {
    uint32_t len = u32();
    need(len);
    std::string s(buf.data() + pos, len);
    pos += len;
    return s;
  }
  std::vector<float> f32_vec() {
    uint64_t n = u64();
    if (n > (end - pos) / 4) {
      throw DataError(path + ": checkpoint record truncated");
    }
    std::vector<float> out(n);
    for (uint64_t i = 0; i < n; ++i) out[i] = f32();
    return out;
  }
};

}  // namespace

std::string serialize_model_config(const ModelConfig& c) {
  char dropout[32];
  std::snprintf(dropout, sizeof(dropout), "%.9g", c.dropout_prob);
  std::string out;
  out += "num_layers=" + std::to_string(c.num_layers) + "\n";
  out += "num_heads=" + std::to_string(c.num_heads) + "\n";
  out += "emb_size=" + std::to_string(c.emb_size) + "\n";
  out += "hidden_size=" + std::to_string(c.hidden_size) + "\n";
  out += "ffn_size=" + std::to_string(c.ffn_size) + "\n";
  out += "vocab_size=" + std::to_string(c.vocab_size) + "\n";
  out += "max_position=" + std::to_string(c.max_position) + "\n";
  out += "num_labels=" + std::to_string(c.num_labels) + "\n";
  out += std::string("dropout_prob=") + dropout + "\n";
  out += std::string("tie_mlm_head=") + (c.tie_mlm_head ? "1" : "0") + "\n";
  return out;
}

ModelConfig parse_model_config(const std::string& text) {
  ModelConfig c;
  std::set<std::string> seen;
  for (const std::string& raw : split(text, '\n')) {
    std::string line = trim(raw);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw DataError("model config record: expected key=value, got '" + line +
                      "'");
    }
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    if (!seen.insert(key).second) {
      throw DataError("model config record: duplicate key '" + key + "'");
    }
    auto as_int = [&]() {
      int v = 0;
      auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
      if (ec != std::errc() || ptr != value.data() + value.size()) {
        throw DataError("model config record: bad integer for '" + key + "'");
      }
      return v;
    };
    if (key == "num_layers") c.num_layers = as_int();
    else if (key == "num_heads") c.num_heads = as_int();
    else if (key == "emb_size") c.emb_size = as_int();
    else if (key == "hidden_size") c.hidden_size = as_int();
    else if (key == "ffn_size") c.ffn_size = as_int();
    else if (key == "vocab_size") c.vocab_size = as_int();
    else if (key == "max_position") c.max_position = as_int();
    else if (key == "num_labels") c.num_labels = as_int();
    else if (key == "tie_mlm_head") c.tie_mlm_head = as_int() != 0;
    else if (key == "dropout_prob") {
      try {
        c.dropout_prob = std::stof(value);
      } catch (const std::exception&) {
        throw DataError("model config record: bad real for 'dropout_prob'");
      }
    } else {
      throw DataError("model config record: unknown key '" + key + "'");
    }
  }
  static const char* kRequired[] = {
      "num_layers", "num_heads", "emb_size", "hidden_size", "ffn_size",
      "vocab_size", "max_position", "num_labels", "dropout_prob",
      "tie_mlm_head"};
  for (const char* key : kRequired) {
    if (!seen.count(key)) {
      throw DataError(std::string("model config record: missing key '") + key +
                      "'");
    }
  }
  return c;
}

void save_checkpoint(const std::string& path, const EncoderModel& model,
                     const OptimizerState* optimizer,
                     const TrainingMeta& meta) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kFormatVersion);
  w.str(serialize_model_config(model.config()));

  const ParameterSet& params = model.parameters();
  w.u64(params.size());
  for (const NamedParam& p : params) {
    w.str(p.name);
    const Shape& shape = p.tensor.shape();
    w.u32(static_cast<uint32_t>(shape.size()));
    for (int64_t extent : shape) w.i64(extent);
    w.f32_span(p.tensor.values());
  }

  w.u8(optimizer != nullptr ? 1 : 0);
  if (optimizer != nullptr) {
    w.u64(optimizer->step_count);
    w.f32(optimizer->config.learning_rate);
    w.f32(optimizer->config.weight_decay);
    w.f32(optimizer->config.beta1);
    w.f32(optimizer->config.beta2);
    w.f32(optimizer->config.epsilon);
    w.u64(optimizer->slots.size());
    for (const AdamW::Slot& slot : optimizer->slots) {
      w.str(slot.name);
      w.f32_span(slot.first_moment);
      w.f32_span(slot.second_moment);
    }
  }

  w.i64(meta.epochs_completed);
  w.u64(meta.seed);
  w.u64(meta.loss_history.size());
  for (double loss : meta.loss_history) w.f64(loss);

  uint64_t checksum = fnv1a64(w.buf.data(), w.buf.size());
  w.u64(checksum);
  write_file(path, w.buf);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::string buf = read_file(path);
  if (buf.size() < 4 + 4 + 8) {
    throw DataError(path + ": corrupt checkpoint (file too small)");
  }
  uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) {
    stored |= static_cast<uint64_t>(
                  static_cast<unsigned char>(buf[buf.size() - 8 + i]))
              << (8 * i);
  }
  if (fnv1a64(buf.data(), buf.size() - 8) != stored) {
    throw DataError(path + ": corrupt checkpoint (checksum mismatch)");
  }

  Reader r{buf, path, 0, buf.size() - 8};
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError(path + ": not a checkpoint file (bad magic)");
  }
  uint32_t version = r.u32();
  if (version != kFormatVersion) {
    throw DataError(path + ": checkpoint format version " +
                    std::to_string(version) + ", expected " +
                    std::to_string(kFormatVersion));
  }

  Checkpoint cp;
  cp.config = parse_model_config(r.str());

  uint64_t param_count = r.u64();
  cp.params.reserve(param_count);
  for (uint64_t i = 0; i < param_count; ++i) {
    std::string name = r.str();
    uint32_t rank = r.u32();
    if (rank > 4) {
      throw DataError(path + ": parameter '" + name + "' has absurd rank " +
                      std::to_string(rank));
    }
    Shape shape(rank);
    for (uint32_t d = 0; d < rank; ++d) shape[d] = r.i64();
    std::vector<float> values = r.f32_vec();
    if (static_cast<int64_t>(values.size()) != shape_numel(shape)) {
      throw DataError(path + ": parameter '" + name + "' has " +
                      std::to_string(values.size()) + " values for shape " +
                      shape_str(shape));
    }
    cp.params.push_back(
        {std::move(name),
         Tensor::from_values(std::move(shape), std::move(values), true)});
  }

  if (r.u8() != 0) {
    OptimizerState opt;
    opt.step_count = r.u64();
    opt.config.learning_rate = r.f32();
    opt.config.weight_decay = r.f32();
    opt.config.beta1 = r.f32();
    opt.config.beta2 = r.f32();
    opt.config.epsilon = r.f32();
    uint64_t slot_count = r.u64();
    opt.slots.reserve(slot_count);
    for (uint64_t i = 0; i < slot_count; ++i) {
      AdamW::Slot slot;
      slot.name = r.str();
      slot.first_moment = r.f32_vec();
      slot.second_moment = r.f32_vec();
      opt.slots.push_back(std::move(slot));
    }
    cp.optimizer = std::move(opt);
  }

  cp.meta.epochs_completed = r.i64();
  cp.meta.seed = r.u64();
  uint64_t loss_count = r.u64();
  cp.meta.loss_history.reserve(loss_count);
  for (uint64_t i = 0; i < loss_count; ++i) {
    cp.meta.loss_history.push_back(r.f64());
  }

  if (r.pos != r.end) {
    throw DataError(path + ": checkpoint has " + std::to_string(r.end - r.pos) +
                    " unread trailing bytes");
  }
  return cp;
}

void check_config(const Checkpoint& cp, const ModelConfig& expected) {
  ModelConfig a = cp.config;
  ModelConfig b = expected;
  a.num_labels = 0;
  b.num_labels = 0;
  if (!(a == b)) {
    throw DataError("checkpoint config mismatch:\n--- stored ---\n" +
                    serialize_model_config(cp.config) + "--- expected ---\n" +
                    serialize_model_config(expected));
  }
}

EncoderModel model_from_checkpoint(Checkpoint&& cp) {
  // Name the first discrepancy precisely before the positional check.
  std::set<std::string> have;
  for (const NamedParam& p : cp.params) have.insert(p.name);
  for (const ParamSpec& spec : parameter_spec(cp.config)) {
    if (!have.erase(spec.name)) {
      throw DataError("checkpoint: missing parameter blob '" + spec.name + "'");
    }
  }
  if (!have.empty()) {
    throw DataError("checkpoint: unexpected parameter blob '" + *have.begin() +
                    "'");
  }
  return EncoderModel(cp.config, std::move(cp.params));
}

EncoderModel model_from_checkpoint(Checkpoint&& cp, int num_labels,
                                   uint64_t head_seed) {
  if (cp.config.num_labels != 0) {
    throw DataError("checkpoint: already contains a classifier head "
                    "(num_labels=" + std::to_string(cp.config.num_labels) +
                    ")");
  }
  EncoderModel model = model_from_checkpoint(std::move(cp));
  model.attach_classifier(num_labels, head_seed);
  return model;
}

}  // namespace dapt
