#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dapt {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorData;

// One node of the backward graph. `backprop` reads the finished output (values
// plus accumulated grad) and adds contributions into the inputs' grad buffers.
struct GradNode {
  const char* op = "";
  std::vector<std::shared_ptr<TensorData>> inputs;
  std::function<void(const TensorData& out)> backprop;
};

struct TensorData {
  Shape shape;
  std::vector<float> values;
  std::vector<float> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::shared_ptr<GradNode> creator;

  int64_t numel() const { return static_cast<int64_t>(values.size()); }
  void ensure_grad();
};

// Value-semantic handle over shared storage. Values are immutable once a
// tensor has entered an op; grad buffers are the only mutable state after
// forward construction.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<float> values,
                            bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return data_->shape; }
  int rank() const { return static_cast<int>(data_->shape.size()); }
  int64_t numel() const { return data_->numel(); }

  std::span<const float> values() const { return data_->values; }
  // Mutable access is for parameter initialization and optimizer updates only.
  std::span<float> values_mut() { return data_->values; }

  bool requires_grad() const { return data_->requires_grad; }
  void set_requires_grad(bool value) { data_->requires_grad = value; }

  bool has_grad() const { return !data_->grad.empty(); }
  std::span<const float> grad() const { return data_->grad; }
  void zero_grad();

  float item() const;

  std::shared_ptr<TensorData>& impl() { return data_; }
  const std::shared_ptr<TensorData>& impl() const { return data_; }

 private:
  explicit Tensor(std::shared_ptr<TensorData> data) : data_(std::move(data)) {}
  std::shared_ptr<TensorData> data_;
};

// Wraps freshly computed op output into a tensor, attaching the grad node when
// grad mode is on and some input requires grad.
Tensor make_op_output(Shape shape, std::vector<float> values, const char* op,
                      std::vector<std::shared_ptr<TensorData>> inputs,
                      std::function<void(const TensorData&)> backprop);

// Reverse-mode accumulation from a scalar loss. Intermediate grads are
// per-call scratch; leaf (creator-less, requires_grad) tensors accumulate
// across calls until zero_grad.
void backward(const Tensor& loss);

// RAII guard disabling graph construction; used for evaluation passes.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

bool grad_enabled();

}  // namespace dapt
