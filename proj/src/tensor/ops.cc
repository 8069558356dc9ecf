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

#include "svae/ops.h"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <string>

#include "svae/errors.h"

namespace svae::ops {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using RowVecMap = Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>;
template <typename T>
using ConstRowVecMap = Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>;

template <typename T>
using Node = internal::Node<T>;
template <typename T>
using BackwardFn = std::function<void(Node<T>&)>;

// Wraps a freshly computed value in a graph node. History is recorded only
// when gradient mode is on and some input requires a gradient.
template <typename T>
Tensor<T> MakeOutput(Shape shape, Buffer<T> value, const char* op,
                     std::initializer_list<const Tensor<T>*> inputs,
                     BackwardFn<T> backward) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  if (GradMode::IsEnabled()) {
    bool any = false;
    for (const Tensor<T>* in : inputs) any = any || in->requires_grad();
    if (any) {
      node->requires_grad = true;
      for (const Tensor<T>* in : inputs) node->inputs.push_back(in->node_ptr());
      node->backward = std::move(backward);
    }
  }
  return Tensor<T>(std::move(node));
}

// Gradient buffer of input i, or nullptr when it takes no gradient.
template <typename T>
T* InputGrad(Node<T>& self, size_t i) {
  Node<T>& in = *self.inputs[i];
  if (!in.requires_grad) return nullptr;
  return in.GradBuffer().data();
}

template <typename T>
const T* InputValue(const Node<T>& self, size_t i) {
  return self.inputs[i]->value.data();
}

// Splits a sequence tensor into (batch, frames, channels).
struct SeqDims {
  int64_t batch;
  int64_t frames;
  int64_t channels;
};

template <typename T>
SeqDims SequenceDims(const Tensor<T>& x, const char* op) {
  if (x.rank() == 2) return {1, x.dim(0), x.dim(1)};
  if (x.rank() == 3) return {x.dim(0), x.dim(1), x.dim(2)};
  throw DimensionError(std::string(op) + " expects [T, C] or [B, T, C], got " +
                       ShapeString(x.shape()));
}

template <typename T>
Shape SequenceShape(const Tensor<T>& like, int64_t frames, int64_t channels) {
  if (like.rank() == 2) return {frames, channels};
  return {like.dim(0), frames, channels};
}

void RequireSameShape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         ShapeString(a) + " vs " + ShapeString(b));
  }
}

// Elementwise map with derivative expressed through input x and output y.
template <typename T, typename F, typename D>
Tensor<T> Unary(const Tensor<T>& x, const char* op, F f, D df) {
  Buffer<T> y(x.numel());
  const auto xv = x.values();
  for (size_t i = 0; i < y.size(); ++i) y[i] = f(xv[i]);
  return MakeOutput<T>(x.shape(), std::move(y), op, {&x},
                       [df](Node<T>& self) {
                         T* dx = InputGrad(self, 0);
                         if (!dx) return;
                         const T* xv = InputValue(self, 0);
                         const T* yv = self.value.data();
                         const T* dy = self.grad.data();
                         for (size_t i = 0; i < self.value.size(); ++i) {
                           dx[i] += dy[i] * df(xv[i], yv[i]);
                         }
                       });
}

}  // namespace

template <typename T>
Tensor<T> Affine(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (w.rank() != 2 || b.rank() != 1 || x.dim(-1) != w.dim(0) ||
      b.dim(0) != w.dim(1)) {
    throw DimensionError("affine: x " + ShapeString(x.shape()) + ", W " +
                         ShapeString(w.shape()) + ", b " +
                         ShapeString(b.shape()));
  }
  const int64_t in = w.dim(0);
  const int64_t out = w.dim(1);
  const int64_t rows = x.numel() / in;
  Shape shape = x.shape();
  shape.back() = out;
  Buffer<T> y(rows * out);
  MatMap<T> ym(y.data(), rows, out);
  ym.noalias() = ConstMatMap<T>(x.values().data(), rows, in) *
                 ConstMatMap<T>(w.values().data(), in, out);
  ym.rowwise() += ConstRowVecMap<T>(b.values().data(), out);
  return MakeOutput<T>(
      std::move(shape), std::move(y), "affine", {&x, &w, &b},
      [rows, in, out](Node<T>& self) {
        ConstMatMap<T> dy(self.grad.data(), rows, out);
        ConstMatMap<T> xm(InputValue(self, 0), rows, in);
        ConstMatMap<T> wm(InputValue(self, 1), in, out);
        if (T* dx = InputGrad(self, 0)) {
          MatMap<T>(dx, rows, in).noalias() += dy * wm.transpose();
        }
        if (T* dw = InputGrad(self, 1)) {
          MatMap<T>(dw, in, out).noalias() += xm.transpose() * dy;
        }
        if (T* db = InputGrad(self, 2)) {
          RowVecMap<T>(db, out) += dy.colwise().sum();
        }
      });
}

template <typename T>
Tensor<T> Conv1dSame(const Tensor<T>& x, const Tensor<T>& kernels,
                     const Tensor<T>& bias) {
  const SeqDims d = SequenceDims(x, "conv1d_same");
  if (kernels.rank() != 3 || kernels.dim(1) != d.channels ||
      bias.rank() != 1 || bias.dim(0) != kernels.dim(2)) {
    throw DimensionError("conv1d_same: x " + ShapeString(x.shape()) +
                         ", kernels " + ShapeString(kernels.shape()) +
                         ", bias " + ShapeString(bias.shape()));
  }
  const int64_t k = kernels.dim(0);
  if (k % 2 == 0) {
    throw ConfigError("conv1d_same needs an odd kernel size, got " +
                      std::to_string(k));
  }
  const int64_t pad = (k - 1) / 2;
  const int64_t cin = d.channels;
  const int64_t cout = kernels.dim(2);
  const int64_t rows = d.batch * d.frames;
  const int64_t width = k * cin;

  // im2col: row (b, t) holds frames t - pad .. t + pad, zero outside.
  Buffer<T> cols(rows * width, T(0));
  const T* xv = x.values().data();
  for (int64_t b = 0; b < d.batch; ++b) {
    for (int64_t t = 0; t < d.frames; ++t) {
      T* dst = cols.data() + (b * d.frames + t) * width;
      for (int64_t j = 0; j < k; ++j) {
        const int64_t src = t + j - pad;
        if (src < 0 || src >= d.frames) continue;
        std::copy_n(xv + (b * d.frames + src) * cin, cin, dst + j * cin);
      }
    }
  }
  Buffer<T> y(rows * cout);
  MatMap<T> ym(y.data(), rows, cout);
  ym.noalias() = ConstMatMap<T>(cols.data(), rows, width) *
                 ConstMatMap<T>(kernels.values().data(), width, cout);
  ym.rowwise() += ConstRowVecMap<T>(bias.values().data(), cout);

  return MakeOutput<T>(
      SequenceShape(x, d.frames, cout), std::move(y), "conv1d_same",
      {&x, &kernels, &bias},
      [d, k, pad, cin, cout, rows, width,
       cols = std::move(cols)](Node<T>& self) {
        ConstMatMap<T> dy(self.grad.data(), rows, cout);
        ConstMatMap<T> km(InputValue(self, 1), width, cout);
        if (T* dk = InputGrad(self, 1)) {
          MatMap<T>(dk, width, cout).noalias() +=
              ConstMatMap<T>(cols.data(), rows, width).transpose() * dy;
        }
        if (T* db = InputGrad(self, 2)) {
          RowVecMap<T>(db, cout) += dy.colwise().sum();
        }
        if (T* dx = InputGrad(self, 0)) {
          RowMat<T> dcols = dy * km.transpose();
          for (int64_t b = 0; b < d.batch; ++b) {
            for (int64_t t = 0; t < d.frames; ++t) {
              const T* src = dcols.data() + (b * d.frames + t) * width;
              for (int64_t j = 0; j < k; ++j) {
                const int64_t f = t + j - pad;
                if (f < 0 || f >= d.frames) continue;
                T* dst = dx + (b * d.frames + f) * cin;
                const T* s = src + j * cin;
                for (int64_t c = 0; c < cin; ++c) dst[c] += s[c];
              }
            }
          }
        }
      });
}

template <typename T>
Tensor<T> AvgPoolTime(const Tensor<T>& x, int factor) {
  if (factor < 1) throw ConfigError("pooling factor must be positive");
  const SeqDims d = SequenceDims(x, "avg_pool_time");
  if (d.frames < factor) {
    throw LengthError("avg_pool_time needs at least " + std::to_string(factor) +
                      " frames, got " + std::to_string(d.frames));
  }
  const int64_t out_frames = d.frames / factor;
  const T inv = T(1) / static_cast<T>(factor);
  Buffer<T> y(d.batch * out_frames * d.channels, T(0));
  const T* xv = x.values().data();
  for (int64_t b = 0; b < d.batch; ++b) {
    for (int64_t t = 0; t < out_frames; ++t) {
      T* dst = y.data() + (b * out_frames + t) * d.channels;
      for (int f = 0; f < factor; ++f) {
        const T* src = xv + (b * d.frames + t * factor + f) * d.channels;
        for (int64_t c = 0; c < d.channels; ++c) dst[c] += src[c];
      }
      for (int64_t c = 0; c < d.channels; ++c) dst[c] *= inv;
    }
  }
  return MakeOutput<T>(
      SequenceShape(x, out_frames, d.channels), std::move(y), "avg_pool_time",
      {&x}, [d, out_frames, factor, inv](Node<T>& self) {
        T* dx = InputGrad(self, 0);
        if (!dx) return;
        for (int64_t b = 0; b < d.batch; ++b) {
          for (int64_t t = 0; t < out_frames; ++t) {
            const T* g = self.grad.data() + (b * out_frames + t) * d.channels;
            for (int f = 0; f < factor; ++f) {
              T* dst = dx + (b * d.frames + t * factor + f) * d.channels;
              for (int64_t c = 0; c < d.channels; ++c) dst[c] += g[c] * inv;
            }
          }
        }
      });
}

template <typename T>
Tensor<T> GlobalAvgPoolTime(const Tensor<T>& x) {
  const SeqDims d = SequenceDims(x, "global_avg_pool_time");
  Buffer<T> y(d.batch * d.channels);
  const T* xv = x.values().data();
  Buffer<T> column(d.frames);
  for (int64_t b = 0; b < d.batch; ++b) {
    for (int64_t c = 0; c < d.channels; ++c) {
      // Summing in sorted order makes the result exactly independent of
      // frame order.
      for (int64_t t = 0; t < d.frames; ++t) {
        column[t] = xv[(b * d.frames + t) * d.channels + c];
      }
      std::sort(column.begin(), column.end());
      double acc = 0.0;
      for (T v : column) acc += static_cast<double>(v);
      y[b * d.channels + c] = static_cast<T>(acc / static_cast<double>(d.frames));
    }
  }
  Shape shape = x.rank() == 2 ? Shape{d.channels} : Shape{d.batch, d.channels};
  return MakeOutput<T>(std::move(shape), std::move(y), "global_avg_pool_time",
                       {&x}, [d](Node<T>& self) {
                         T* dx = InputGrad(self, 0);
                         if (!dx) return;
                         const T inv = T(1) / static_cast<T>(d.frames);
                         for (int64_t b = 0; b < d.batch; ++b) {
                           const T* g = self.grad.data() + b * d.channels;
                           for (int64_t t = 0; t < d.frames; ++t) {
                             T* dst = dx + (b * d.frames + t) * d.channels;
                             for (int64_t c = 0; c < d.channels; ++c) {
                               dst[c] += g[c] * inv;
                             }
                           }
                         }
                       });
}

template <typename T>
Tensor<T> Relu(const Tensor<T>& x) {
  return Unary(
      x, "relu", [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> Tanh(const Tensor<T>& x) {
  return Unary(
      x, "tanh", [](T v) { return std::tanh(v); },
      [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> Exp(const Tensor<T>& x) {
  return Unary(
      x, "exp", [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> Abs(const Tensor<T>& x) {
  return Unary(
      x, "abs", [](T v) { return std::abs(v); },
      [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> Square(const Tensor<T>& x) {
  return Unary(
      x, "square", [](T v) { return v * v; },
      [](T v, T) { return T(2) * v; });
}

template <typename T>
Tensor<T> Scale(const Tensor<T>& x, T factor) {
  return Unary(
      x, "scale", [factor](T v) { return v * factor; },
      [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> AddScalar(const Tensor<T>& x, T offset) {
  return Unary(
      x, "add_scalar", [offset](T v) { return v + offset; },
      [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> SoftmaxLastDim(const Tensor<T>& x) {
  const int64_t n = x.dim(-1);
  const int64_t rows = x.numel() / n;
  Buffer<T> y(x.numel());
  const T* xv = x.values().data();
  for (int64_t r = 0; r < rows; ++r) {
    const T* src = xv + r * n;
    T* dst = y.data() + r * n;
    const T peak = *std::max_element(src, src + n);
    T total = T(0);
    for (int64_t i = 0; i < n; ++i) {
      dst[i] = std::exp(src[i] - peak);
      total += dst[i];
    }
    for (int64_t i = 0; i < n; ++i) dst[i] /= total;
  }
  return MakeOutput<T>(x.shape(), std::move(y), "softmax", {&x},
                       [rows, n](Node<T>& self) {
                         T* dx = InputGrad(self, 0);
                         if (!dx) return;
                         for (int64_t r = 0; r < rows; ++r) {
                           const T* yv = self.value.data() + r * n;
                           const T* dy = self.grad.data() + r * n;
                           T dot = T(0);
                           for (int64_t i = 0; i < n; ++i) dot += dy[i] * yv[i];
                           for (int64_t i = 0; i < n; ++i) {
                             dx[r * n + i] += yv[i] * (dy[i] - dot);
                           }
                         }
                       });
}

template <typename T>
Tensor<T> Add(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  const bool suffix =
      bs.size() <= as.size() && std::equal(bs.rbegin(), bs.rend(), as.rbegin());
  if (!suffix) {
    throw DimensionError("add: shape mismatch " + ShapeString(as) + " vs " +
                         ShapeString(bs));
  }
  const int64_t inner = b.numel();
  const int64_t outer = a.numel() / inner;
  Buffer<T> y(a.values().begin(), a.values().end());
  const T* bv = b.values().data();
  for (int64_t o = 0; o < outer; ++o) {
    T* dst = y.data() + o * inner;
    for (int64_t i = 0; i < inner; ++i) dst[i] += bv[i];
  }
  return MakeOutput<T>(as, std::move(y), "add", {&a, &b},
                       [inner, outer](Node<T>& self) {
                         const T* dy = self.grad.data();
                         if (T* da = InputGrad(self, 0)) {
                           for (int64_t i = 0; i < inner * outer; ++i) {
                             da[i] += dy[i];
                           }
                         }
                         if (T* db = InputGrad(self, 1)) {
                           for (int64_t o = 0; o < outer; ++o) {
                             for (int64_t i = 0; i < inner; ++i) {
                               db[i] += dy[o * inner + i];
                             }
                           }
                         }
                       });
}

template <typename T>
Tensor<T> Sub(const Tensor<T>& a, const Tensor<T>& b) {
  RequireSameShape(a.shape(), b.shape(), "sub");
  Buffer<T> y(a.numel());
  for (int64_t i = 0; i < a.numel(); ++i) y[i] = a.at(i) - b.at(i);
  return MakeOutput<T>(a.shape(), std::move(y), "sub", {&a, &b},
                       [](Node<T>& self) {
                         const T* dy = self.grad.data();
                         const size_t n = self.grad.size();
                         if (T* da = InputGrad(self, 0)) {
                           for (size_t i = 0; i < n; ++i) da[i] += dy[i];
                         }
                         if (T* db = InputGrad(self, 1)) {
                           for (size_t i = 0; i < n; ++i) db[i] -= dy[i];
                         }
                       });
}

template <typename T>
Tensor<T> Mul(const Tensor<T>& a, const Tensor<T>& b) {
  RequireSameShape(a.shape(), b.shape(), "mul");
  Buffer<T> y(a.numel());
  for (int64_t i = 0; i < a.numel(); ++i) y[i] = a.at(i) * b.at(i);
  return MakeOutput<T>(a.shape(), std::move(y), "mul", {&a, &b},
                       [](Node<T>& self) {
                         const T* dy = self.grad.data();
                         const size_t n = self.grad.size();
                         if (T* da = InputGrad(self, 0)) {
                           const T* bv = InputValue(self, 1);
                           for (size_t i = 0; i < n; ++i) da[i] += dy[i] * bv[i];
                         }
                         if (T* db = InputGrad(self, 1)) {
                           const T* av = InputValue(self, 0);
                           for (size_t i = 0; i < n; ++i) db[i] += dy[i] * av[i];
                         }
                       });
}

template <typename T>
Tensor<T> ConcatChannels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != b.rank() ||
      !std::equal(a.shape().begin(), a.shape().end() - 1, b.shape().begin())) {
    throw DimensionError("concat_channels: shape mismatch " +
                         ShapeString(a.shape()) + " vs " +
                         ShapeString(b.shape()));
  }
  const int64_t ca = a.dim(-1);
  const int64_t cb = b.dim(-1);
  const int64_t rows = a.numel() / ca;
  Buffer<T> y(rows * (ca + cb));
  for (int64_t r = 0; r < rows; ++r) {
    std::copy_n(a.values().data() + r * ca, ca, y.data() + r * (ca + cb));
    std::copy_n(b.values().data() + r * cb, cb, y.data() + r * (ca + cb) + ca);
  }
  Shape shape = a.shape();
  shape.back() = ca + cb;
  return MakeOutput<T>(std::move(shape), std::move(y), "concat_channels",
                       {&a, &b}, [rows, ca, cb](Node<T>& self) {
                         const T* dy = self.grad.data();
                         T* da = InputGrad(self, 0);
                         T* db = InputGrad(self, 1);
                         for (int64_t r = 0; r < rows; ++r) {
                           const T* src = dy + r * (ca + cb);
                           if (da) {
                             for (int64_t i = 0; i < ca; ++i) da[r * ca + i] += src[i];
                           }
                           if (db) {
                             for (int64_t i = 0; i < cb; ++i) {
                               db[r * cb + i] += src[ca + i];
                             }
                           }
                         }
                       });
}

template <typename T>
Tensor<T> SliceLastDim(const Tensor<T>& x, int64_t start, int64_t count) {
  const int64_t n = x.dim(-1);
  if (start < 0 || count <= 0 || start + count > n) {
    throw DimensionError("slice [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") out of range for " +
                         ShapeString(x.shape()));
  }
  const int64_t rows = x.numel() / n;
  Buffer<T> y(rows * count);
  for (int64_t r = 0; r < rows; ++r) {
    std::copy_n(x.values().data() + r * n + start, count, y.data() + r * count);
  }
  Shape shape = x.shape();
  shape.back() = count;
  return MakeOutput<T>(std::move(shape), std::move(y), "slice_last_dim", {&x},
                       [rows, n, start, count](Node<T>& self) {
                         T* dx = InputGrad(self, 0);
                         if (!dx) return;
                         for (int64_t r = 0; r < rows; ++r) {
                           for (int64_t i = 0; i < count; ++i) {
                             dx[r * n + start + i] += self.grad[r * count + i];
                           }
                         }
                       });
}

template <typename T>
Tensor<T> TileTime(const Tensor<T>& z, int64_t frames) {
  if (z.rank() != 1 && z.rank() != 2) {
    throw DimensionError("tile_time expects [C] or [B, C], got " +
                         ShapeString(z.shape()));
  }
  if (frames <= 0) throw LengthError("tile_time needs at least one frame");
  const int64_t c = z.dim(-1);
  const int64_t batch = z.rank() == 2 ? z.dim(0) : 1;
  Buffer<T> y(batch * frames * c);
  for (int64_t b = 0; b < batch; ++b) {
    for (int64_t t = 0; t < frames; ++t) {
      std::copy_n(z.values().data() + b * c, c, y.data() + (b * frames + t) * c);
    }
  }
  Shape shape = z.rank() == 1 ? Shape{frames, c} : Shape{batch, frames, c};
  return MakeOutput<T>(std::move(shape), std::move(y), "tile_time", {&z},
                       [batch, frames, c](Node<T>& self) {
                         T* dz = InputGrad(self, 0);
                         if (!dz) return;
                         for (int64_t b = 0; b < batch; ++b) {
                           for (int64_t t = 0; t < frames; ++t) {
                             const T* g = self.grad.data() + (b * frames + t) * c;
                             for (int64_t i = 0; i < c; ++i) dz[b * c + i] += g[i];
                           }
                         }
                       });
}

template <typename T>
Tensor<T> LayerNorm(const Tensor<T>& x, const Tensor<T>& gain,
                    const Tensor<T>& bias, double epsilon) {
  const int64_t n = x.dim(-1);
  if (gain.shape() != Shape{n} || bias.shape() != Shape{n}) {
    throw DimensionError("layer_norm: x " + ShapeString(x.shape()) + ", gain " +
                         ShapeString(gain.shape()) + ", bias " +
                         ShapeString(bias.shape()));
  }
  const int64_t rows = x.numel() / n;
  Buffer<T> y(x.numel());
  Buffer<T> xhat(x.numel());
  Buffer<T> inv_std(rows);
  const T* xv = x.values().data();
  const T* g = gain.values().data();
  const T* be = bias.values().data();
  for (int64_t r = 0; r < rows; ++r) {
    const T* src = xv + r * n;
    T mean = T(0);
    for (int64_t i = 0; i < n; ++i) mean += src[i];
    mean /= static_cast<T>(n);
    T var = T(0);
    for (int64_t i = 0; i < n; ++i) var += (src[i] - mean) * (src[i] - mean);
    var /= static_cast<T>(n);
    const T is = T(1) / std::sqrt(var + static_cast<T>(epsilon));
    inv_std[r] = is;
    for (int64_t i = 0; i < n; ++i) {
      const T h = (src[i] - mean) * is;
      xhat[r * n + i] = h;
      y[r * n + i] = h * g[i] + be[i];
    }
  }
  return MakeOutput<T>(
      x.shape(), std::move(y), "layer_norm", {&x, &gain, &bias},
      [rows, n, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](Node<T>& self) {
        const T* dy = self.grad.data();
        const T* g = InputValue(self, 1);
        T* dx = InputGrad(self, 0);
        T* dg = InputGrad(self, 1);
        T* db = InputGrad(self, 2);
        for (int64_t r = 0; r < rows; ++r) {
          const T* dyr = dy + r * n;
          const T* hr = xhat.data() + r * n;
          if (dg || db) {
            for (int64_t i = 0; i < n; ++i) {
              if (dg) dg[i] += dyr[i] * hr[i];
              if (db) db[i] += dyr[i];
            }
          }
          if (dx) {
            T mean_dh = T(0);
            T mean_dh_h = T(0);
            for (int64_t i = 0; i < n; ++i) {
              const T dh = dyr[i] * g[i];
              mean_dh += dh;
              mean_dh_h += dh * hr[i];
            }
            mean_dh /= static_cast<T>(n);
            mean_dh_h /= static_cast<T>(n);
            for (int64_t i = 0; i < n; ++i) {
              const T dh = dyr[i] * g[i];
              dx[r * n + i] += inv_std[r] * (dh - mean_dh - hr[i] * mean_dh_h);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> Dropout(const Tensor<T>& x, double rate, bool training, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1), got " +
                      std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  Buffer<T> mask(x.numel());
  Buffer<T> y(x.numel());
  for (int64_t i = 0; i < x.numel(); ++i) {
    mask[i] = rng.Uniform() < rate ? T(0) : keep_scale;
    y[i] = x.at(i) * mask[i];
  }
  return MakeOutput<T>(x.shape(), std::move(y), "dropout", {&x},
                       [mask = std::move(mask)](Node<T>& self) {
                         T* dx = InputGrad(self, 0);
                         if (!dx) return;
                         for (size_t i = 0; i < mask.size(); ++i) {
                           dx[i] += self.grad[i] * mask[i];
                         }
                       });
}

template <typename T>
Tensor<T> MultiHeadAttention(const Tensor<T>& q, const Tensor<T>& k,
                             const Tensor<T>& v, int heads,
                             AttentionMask mask) {
  RequireSameShape(q.shape(), k.shape(), "attention");
  RequireSameShape(q.shape(), v.shape(), "attention");
  const SeqDims d = SequenceDims(q, "attention");
  if (heads <= 0 || d.channels % heads != 0) {
    throw ConfigError("attention width " + std::to_string(d.channels) +
                      " is not divisible by " + std::to_string(heads) +
                      " heads");
  }
  const int64_t dh = d.channels / heads;
  const int64_t frames = d.frames;
  const int64_t c = d.channels;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  const Eigen::OuterStride<> stride(c);

  // probs holds the attention weights of every (batch, head) pair.
  Buffer<T> probs(d.batch * heads * frames * frames);
  Buffer<T> y(q.numel());
  for (int64_t b = 0; b < d.batch; ++b) {
    for (int64_t h = 0; h < heads; ++h) {
      const int64_t off = b * frames * c + h * dh;
      ConstStridedMap<T> qm(q.values().data() + off, frames, dh, stride);
      ConstStridedMap<T> km(k.values().data() + off, frames, dh, stride);
      ConstStridedMap<T> vm(v.values().data() + off, frames, dh, stride);
      MatMap<T> p(probs.data() + (b * heads + h) * frames * frames, frames,
                  frames);
      if (mask == AttentionMask::kDiagonal) {
        p.setIdentity();
      } else {
        p.noalias() = (qm * km.transpose()) * scale;
        for (int64_t r = 0; r < frames; ++r) {
          const T peak = p.row(r).maxCoeff();
          p.row(r) = (p.row(r).array() - peak).exp();
          p.row(r) /= p.row(r).sum();
        }
      }
      StridedMap<T>(y.data() + off, frames, dh, stride).noalias() = p * vm;
    }
  }
  return MakeOutput<T>(
      q.shape(), std::move(y), "attention", {&q, &k, &v},
      [d, heads, dh, frames, c, scale, probs = std::move(probs)](Node<T>& self) {
        const Eigen::OuterStride<> stride(c);
        T* dq = InputGrad(self, 0);
        T* dk = InputGrad(self, 1);
        T* dv = InputGrad(self, 2);
        RowMat<T> dp(frames, frames);
        for (int64_t b = 0; b < d.batch; ++b) {
          for (int64_t h = 0; h < heads; ++h) {
            const int64_t off = b * frames * c + h * dh;
            ConstStridedMap<T> qm(InputValue(self, 0) + off, frames, dh, stride);
            ConstStridedMap<T> km(InputValue(self, 1) + off, frames, dh, stride);
            ConstStridedMap<T> vm(InputValue(self, 2) + off, frames, dh, stride);
            ConstStridedMap<T> dy(self.grad.data() + off, frames, dh, stride);
            ConstMatMap<T> p(probs.data() + (b * heads + h) * frames * frames,
                             frames, frames);
            if (dv) {
              StridedMap<T>(dv + off, frames, dh, stride).noalias() +=
                  p.transpose() * dy;
            }
            if (!dq && !dk) continue;
            dp.noalias() = dy * vm.transpose();
            // Softmax backward: dS = P .* (dP - rowsum(dP .* P)).
            for (int64_t r = 0; r < frames; ++r) {
              const T dot = (dp.row(r).array() * p.row(r).array()).sum();
              dp.row(r) = p.row(r).array() * (dp.row(r).array() - dot);
            }
            if (dq) {
              StridedMap<T>(dq + off, frames, dh, stride).noalias() +=
                  (dp * km) * scale;
            }
            if (dk) {
              StridedMap<T>(dk + off, frames, dh, stride).noalias() +=
                  (dp.transpose() * qm) * scale;
            }
          }
        }
      });
}

template <typename T>
Tensor<T> Sum(const Tensor<T>& x) {
  double acc = 0.0;
  for (T v : x.values()) acc += static_cast<double>(v);
  return MakeOutput<T>({1}, {static_cast<T>(acc)}, "sum", {&x},
                       [](Node<T>& self) {
                         T* dx = InputGrad(self, 0);
                         if (!dx) return;
                         const T g = self.grad[0];
                         const size_t n = self.inputs[0]->value.size();
                         for (size_t i = 0; i < n; ++i) dx[i] += g;
                       });
}

template <typename T>
Tensor<T> Mean(const Tensor<T>& x) {
  double acc = 0.0;
  for (T v : x.values()) acc += static_cast<double>(v);
  const double n = static_cast<double>(x.numel());
  return MakeOutput<T>({1}, {static_cast<T>(acc / n)}, "mean", {&x},
                       [](Node<T>& self) {
                         T* dx = InputGrad(self, 0);
                         if (!dx) return;
                         const size_t n = self.inputs[0]->value.size();
                         const T g = self.grad[0] / static_cast<T>(n);
                         for (size_t i = 0; i < n; ++i) dx[i] += g;
                       });
}

#define SVAE_INSTANTIATE_OPS(T)                                              \
  template Tensor<T> Affine(const Tensor<T>&, const Tensor<T>&,              \
                            const Tensor<T>&);                               \
  template Tensor<T> Conv1dSame(const Tensor<T>&, const Tensor<T>&,          \
                                const Tensor<T>&);                           \
  template Tensor<T> AvgPoolTime(const Tensor<T>&, int);                     \
  template Tensor<T> GlobalAvgPoolTime(const Tensor<T>&);                    \
  template Tensor<T> Relu(const Tensor<T>&);                                 \
  template Tensor<T> Tanh(const Tensor<T>&);                                 \
  template Tensor<T> Exp(const Tensor<T>&);                                  \
  template Tensor<T> Abs(const Tensor<T>&);                                  \
  template Tensor<T> Square(const Tensor<T>&);                               \
  template Tensor<T> SoftmaxLastDim(const Tensor<T>&);                       \
  template Tensor<T> Add(const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> Sub(const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> Mul(const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> Scale(const Tensor<T>&, T);                             \
  template Tensor<T> AddScalar(const Tensor<T>&, T);                         \
  template Tensor<T> ConcatChannels(const Tensor<T>&, const Tensor<T>&);     \
  template Tensor<T> SliceLastDim(const Tensor<T>&, int64_t, int64_t);       \
  template Tensor<T> TileTime(const Tensor<T>&, int64_t);                    \
  template Tensor<T> LayerNorm(const Tensor<T>&, const Tensor<T>&,           \
                               const Tensor<T>&, double);                    \
  template Tensor<T> Dropout(const Tensor<T>&, double, bool, Rng&);          \
  template Tensor<T> MultiHeadAttention(const Tensor<T>&, const Tensor<T>&,  \
                                        const Tensor<T>&, int, AttentionMask); \
  template Tensor<T> Sum(const Tensor<T>&);                                  \
  template Tensor<T> Mean(const Tensor<T>&);

SVAE_INSTANTIATE_OPS(float)
SVAE_INSTANTIATE_OPS(double)

#undef SVAE_INSTANTIATE_OPS

}  // namespace svae::ops
