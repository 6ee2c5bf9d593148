#include "core/tensor.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_set>

namespace dapt {

namespace {
thread_local bool g_grad_enabled = true;
}

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string out = "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  out += ")";
  return out;
}

void TensorData::ensure_grad() {
  if (grad.empty()) grad.assign(values.size(), 0.0f);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0f, requires_grad);
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  auto data = std::make_shared<TensorData>();
  int64_t n = shape_numel(shape);
  if (n < 0) throw std::invalid_argument("tensor shape has negative extent " + shape_str(shape));
  data->shape = std::move(shape);
  data->values.assign(static_cast<size_t>(n), value);
  data->requires_grad = requires_grad;
  return Tensor(std::move(data));
}

Tensor Tensor::from_values(Shape shape, std::vector<float> values, bool requires_grad) {
  if (shape_numel(shape) != static_cast<int64_t>(values.size())) {
    throw std::invalid_argument("value count " + std::to_string(values.size()) +
                                " does not match shape " + shape_str(shape));
  }
  auto data = std::make_shared<TensorData>();
  data->shape = std::move(shape);
  data->values = std::move(values);
  data->requires_grad = requires_grad;
  return Tensor(std::move(data));
}

Tensor Tensor::scalar(float value, bool requires_grad) {
  return from_values({1}, {value}, requires_grad);
}

void Tensor::zero_grad() { data_->grad.clear(); }

float Tensor::item() const {
  if (numel() != 1) {
    throw std::invalid_argument("item() requires a scalar tensor, got shape " + shape_str(shape()));
  }
  return data_->values[0];
}

Tensor make_op_output(Shape shape, std::vector<float> values, const char* op,
                      std::vector<std::shared_ptr<TensorData>> inputs,
                      std::function<void(const TensorData&)> backprop) {
  bool needs_grad = false;
  if (g_grad_enabled) {
    for (const auto& in : inputs) {
      if (in->requires_grad || in->creator) {
        needs_grad = true;
        break;
      }
    }
  }
  Tensor out = Tensor::from_values(std::move(shape), std::move(values));
  if (needs_grad) {
    auto node = std::make_shared<GradNode>();
    node->op = op;
    node->inputs = std::move(inputs);
    node->backprop = std::move(backprop);
    out.impl()->creator = std::move(node);
  }
  return out;
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw std::invalid_argument("backward: undefined tensor");
  if (loss.numel() != 1) {
    throw std::invalid_argument("backward requires a scalar loss, got shape " +
                                shape_str(loss.shape()));
  }

  // Post-order DFS over creator edges gives a topological order.
  std::vector<TensorData*> order;
  std::unordered_set<TensorData*> visited;
  struct Frame {
    TensorData* t;
    size_t next_input = 0;
  };
  std::vector<Frame> stack;
  TensorData* root = loss.impl().get();
  if (visited.insert(root).second) stack.push_back({root});
  while (!stack.empty()) {
    Frame& f = stack.back();
    GradNode* node = f.t->creator.get();
    size_t arity = node ? node->inputs.size() : 0;
    if (f.next_input < arity) {
      TensorData* in = node->inputs[f.next_input++].get();
      if (visited.insert(in).second) stack.push_back({in});
    } else {
      order.push_back(f.t);
      stack.pop_back();
    }
  }

  // Intermediate grads are scratch for this call: reset them so repeated
  // backward calls only accumulate at the leaves.
  for (TensorData* t : order) {
    if (t->creator) t->grad.assign(t->values.size(), 0.0f);
  }

  root->ensure_grad();
  root->grad[0] += 1.0f;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorData* t = *it;
    if (t->creator && t->creator->backprop) t->creator->backprop(*t);
  }
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

bool grad_enabled() { return g_grad_enabled; }

}  // namespace dapt
