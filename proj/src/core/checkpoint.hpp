#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "core/adamw.hpp"
#include "core/model.hpp"

namespace dapt {

// Progress bookkeeping carried inside a checkpoint.
struct TrainingMeta {
  int64_t epochs_completed = 0;
  uint64_t seed = 0;
  std::vector<double> loss_history;  // mean train loss per completed epoch
};

// Full optimizer snapshot; restoring it makes a resumed run continue the
// moment sequence bitwise.
struct OptimizerState {
  uint64_t step_count = 0;
  AdamWConfig config;
  std::vector<AdamW::Slot> slots;
};

struct Checkpoint {
  ModelConfig config;
  std::vector<NamedParam> params;
  std::optional<OptimizerState> optimizer;
  TrainingMeta meta;
};

// Binary file: magic "DAPT", u32 format version, length-prefixed text config
// record, named parameter blobs (name, shape, raw little-endian f32), the
// optional optimizer state, training metadata, and a trailing FNV-1a 64-bit
// checksum of everything before it.
void save_checkpoint(const std::string& path, const EncoderModel& model,
                     const OptimizerState* optimizer, const TrainingMeta& meta);

// Throws DataError: corrupt-file (checksum / truncation), version mismatch,
// or malformed records. Never returns a partial result.
Checkpoint read_checkpoint(const std::string& path);

// Throws DataError when the stored config differs from `expected`
// (num_labels excluded: a post-trained checkpoint has no head yet).
void check_config(const Checkpoint& cp, const ModelConfig& expected);

// Builds the model, verifying the blobs against parameter_spec(config);
// missing or unexpected blobs are named in the error.
EncoderModel model_from_checkpoint(Checkpoint&& cp);

// Same, then attaches a fresh classifier head (fine-tuning entry point).
EncoderModel model_from_checkpoint(Checkpoint&& cp, int num_labels,
                                   uint64_t head_seed);

// Text round trip for the embedded config record ("key=value" lines).
std::string serialize_model_config(const ModelConfig& config);
ModelConfig parse_model_config(const std::string& text);

}  // namespace dapt
