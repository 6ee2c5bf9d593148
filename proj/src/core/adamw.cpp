#include "core/adamw.hpp"

#include <cmath>
#include <stdexcept>

namespace dapt {

void zero_grads(ParameterSet& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

void AdamW::step(ParameterSet& params) {
  if (slots_.empty()) {
    slots_.reserve(params.size());
    for (const auto& p : params) {
      Slot s;
      s.name = p.name;
      s.first_moment.assign(p.tensor.values().size(), 0.0f);
      s.second_moment.assign(p.tensor.values().size(), 0.0f);
      slots_.push_back(std::move(s));
    }
  }
  if (slots_.size() != params.size()) {
    throw std::invalid_argument("optimizer state holds " + std::to_string(slots_.size()) +
                                " parameters, got " + std::to_string(params.size()));
  }

  ++step_count_;
  const double lr = config_.learning_rate;
  const double wd = config_.weight_decay;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double eps = config_.epsilon;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));
  const double decay = 1.0 - lr * wd;

  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    Slot& slot = slots_[pi];
    if (slot.name != p.name || slot.first_moment.size() != p.tensor.values().size()) {
      throw std::invalid_argument("optimizer state mismatch for parameter " + p.name);
    }
    if (!p.tensor.has_grad()) {
      throw std::invalid_argument("adamw_step: parameter " + p.name + " has no gradient");
    }
    auto values = p.tensor.values_mut();
    auto grads = p.tensor.grad();
    for (size_t i = 0; i < values.size(); ++i) {
      double g = grads[i];
      double m = b1 * slot.first_moment[i] + (1.0 - b1) * g;
      double v = b2 * slot.second_moment[i] + (1.0 - b2) * g * g;
      slot.first_moment[i] = static_cast<float>(m);
      slot.second_moment[i] = static_cast<float>(v);
      double m_hat = m / bias1;
      double v_hat = v / bias2;
      double updated = values[i] - lr * m_hat / (std::sqrt(v_hat) + eps);
      values[i] = static_cast<float>(updated * decay);
    }
  }
}

void AdamW::restore(uint64_t step_count, std::vector<Slot> slots) {
  step_count_ = step_count;
  slots_ = std::move(slots);
}

}  // namespace dapt
