// Copyright (c) 2026 The svae Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SVAE_TENSOR_H_
#define SVAE_TENSOR_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace svae {

// Storage of tensor values and gradients. Every buffer starts on a
// vector-register boundary so vectorized kernels take the same path, and
// round the same way, regardless of where the allocator placed the data.
template <typename T>
using Buffer = std::vector<T, Eigen::aligned_allocator<T>>;

using Shape = std::vector<int64_t>;

int64_t NumElements(const Shape& shape);
std::string ShapeString(const Shape& shape);

template <typename T>
class Tensor;

namespace internal {

// One vertex of the computation graph. A node owns its forward value and,
// once backward has reached it, its gradient. Inputs are only recorded when
// gradient recording is enabled and at least one input requires a gradient.
template <typename T>
struct Node {
  Shape shape;
  Buffer<T> value;
  Buffer<T> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Propagates this node's grad into its inputs' grads.
  std::function<void(Node&)> backward;

  // Allocates a zero gradient on first use.
  Buffer<T>& GradBuffer() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
};

}  // namespace internal

// Thread-local switch for gradient recording. Inference paths construct a
// NoGradGuard so that no graph is retained.
class GradMode {
 public:
  static bool IsEnabled();
  static void SetEnabled(bool enabled);
};

class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::IsEnabled()) {
    GradMode::SetEnabled(false);
  }
  ~NoGradGuard() { GradMode::SetEnabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Handle to a graph node. Copies share the node, so a parameter tensor held
// by a layer and by the parameter store is the same object.
template <typename T>
class Tensor {
 public:
  using Scalar = T;
  using NodePtr = std::shared_ptr<internal::Node<T>>;

  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor Zeros(Shape shape, bool requires_grad = false);
  static Tensor Full(Shape shape, T value, bool requires_grad = false);
  static Tensor FromVector(Shape shape, const std::vector<T>& values,
                           bool requires_grad = false);
  static Tensor FromBuffer(Shape shape, Buffer<T> values,
                           bool requires_grad = false);
  static Tensor Scalar1(T value) { return FromVector({1}, {value}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  // Extent of dimension i; negative i counts from the back.
  int64_t dim(int i) const;
  int64_t numel() const { return static_cast<int64_t>(node_->value.size()); }

  std::span<const T> values() const { return node_->value; }
  std::span<T> mutable_values() { return node_->value; }
  T at(int64_t flat_index) const { return node_->value[flat_index]; }
  // Value of a single-element tensor.
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool value) { node_->requires_grad = value; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->GradBuffer(); }
  void ZeroGrad() { node_->grad.clear(); }

  // Reverse-mode accumulation from this single-element tensor into every
  // reachable leaf that requires a gradient.
  void Backward() const;

  // Same values, no history.
  Tensor Detach() const;
  // Deep copy of values into a fresh leaf.
  Tensor Clone(bool requires_grad = false) const;

  internal::Node<T>* node() const { return node_.get(); }
  const NodePtr& node_ptr() const { return node_; }

 private:
  NodePtr node_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

// Converts values between precisions, producing a leaf.
template <typename To, typename From>
Tensor<To> CastTensor(const Tensor<From>& t, bool requires_grad = false) {
  std::vector<To> out(t.values().begin(), t.values().end());
  return Tensor<To>::FromVector(t.shape(), std::move(out), requires_grad);
}

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace svae

#endif  // SVAE_TENSOR_H_
