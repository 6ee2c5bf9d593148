#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace dapt {

struct NamedParam {
  std::string name;
  Tensor tensor;
};

using ParameterSet = std::vector<NamedParam>;

void zero_grads(ParameterSet& params);

struct AdamWConfig {
  float learning_rate = 2e-5f;
  float weight_decay = 0.01f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;
};

// Adam with bias correction followed by decoupled weight decay
// (p <- p - lr*wd*p applied after the Adam update). Gradients are left
// untouched; the training loop clears them.
class AdamW {
 public:
  explicit AdamW(AdamWConfig config) : config_(config) {}

  // Applies one update over all parameters. Throws if any parameter has no
  // gradient, naming the parameter.
  void step(ParameterSet& params);

  uint64_t step_count() const { return step_count_; }
  const AdamWConfig& config() const { return config_; }

  // State access for checkpointing. Slots are created on first step, ordered
  // and sized like the parameter set they were stepped with.
  struct Slot {
    std::string name;
    std::vector<float> first_moment;
    std::vector<float> second_moment;
  };
  const std::vector<Slot>& slots() const { return slots_; }
  void restore(uint64_t step_count, std::vector<Slot> slots);

 private:
  AdamWConfig config_;
  uint64_t step_count_ = 0;
  std::vector<Slot> slots_;
};

}  // namespace dapt
