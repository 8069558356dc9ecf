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

#include "svae/tensor.h"

#include <sstream>
#include <unordered_set>

#include "svae/errors.h"

namespace svae {

namespace {
thread_local bool grad_mode_enabled = true;
}  // namespace

bool GradMode::IsEnabled() { return grad_mode_enabled; }
void GradMode::SetEnabled(bool enabled) { grad_mode_enabled = enabled; }

int64_t NumElements(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string ShapeString(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T> Tensor<T>::Zeros(Shape shape, bool requires_grad) {
  return Full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::Full(Shape shape, T value, bool requires_grad) {
  const int64_t n = NumElements(shape);
  return FromBuffer(std::move(shape), Buffer<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::FromVector(Shape shape, const std::vector<T>& values,
                                bool requires_grad) {
  return FromBuffer(std::move(shape), Buffer<T>(values.begin(), values.end()),
                    requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::FromBuffer(Shape shape, Buffer<T> values,
                                bool requires_grad) {
  for (int64_t d : shape) {
    if (d <= 0) {
      throw DimensionError("tensor extents must be positive, got " +
                           ShapeString(shape));
    }
  }
  if (NumElements(shape) != static_cast<int64_t>(values.size())) {
    throw DimensionError("shape " + ShapeString(shape) + " needs " +
                         std::to_string(NumElements(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  auto node = std::make_shared<internal::Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
int64_t Tensor<T>::dim(int i) const {
  const int r = rank();
  const int idx = i < 0 ? r + i : i;
  if (idx < 0 || idx >= r) {
    throw DimensionError("dimension index " + std::to_string(i) +
                         " out of range for shape " + ShapeString(shape()));
  }
  return node_->shape[idx];
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    throw ContractError("item() on tensor of shape " + ShapeString(shape()));
  }
  return node_->value[0];
}

template <typename T>
void Tensor<T>::Backward() const {
  if (numel() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " +
                        ShapeString(shape()));
  }
  if (!node_->requires_grad) return;

  // Post-order over the graph, iteratively to survive deep graphs.
  std::vector<internal::Node<T>*> order;
  std::unordered_set<internal::Node<T>*> visited;
  std::vector<std::pair<internal::Node<T>*, size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      internal::Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  node_->GradBuffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    internal::Node<T>* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

template <typename T>
Tensor<T> Tensor<T>::Detach() const {
  return FromBuffer(shape(), node_->value, false);
}

template <typename T>
Tensor<T> Tensor<T>::Clone(bool requires_grad) const {
  return FromBuffer(shape(), node_->value, requires_grad);
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace svae
