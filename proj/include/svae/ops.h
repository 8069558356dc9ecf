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

#ifndef SVAE_OPS_H_
#define SVAE_OPS_H_

#include <cstdint>

#include "svae/rng.h"
#include "svae/tensor.h"

// Differentiable operations. Sequence tensors are [T, C] or batched
// [B, T, C]; every op accepts both layouts and preserves the input rank.
namespace svae::ops {

// y = x W + b over the last dimension of x. x: [..., in], W: [in, out],
// b: [out].
template <typename T>
Tensor<T> Affine(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

// Length-preserving 1-D convolution along time with (k - 1) / 2 zero frames
// of padding on each side. kernels: [k, C_in, C_out], k odd.
template <typename T>
Tensor<T> Conv1dSame(const Tensor<T>& x, const Tensor<T>& kernels,
                     const Tensor<T>& bias);

// Mean over disjoint groups of `factor` frames. A trailing partial group is
// dropped, so the output has floor(T / factor) frames.
template <typename T>
Tensor<T> AvgPoolTime(const Tensor<T>& x, int factor = 2);

// Per-channel mean over frames: [T, C] -> [C], [B, T, C] -> [B, C].
template <typename T>
Tensor<T> GlobalAvgPoolTime(const Tensor<T>& x);

template <typename T>
Tensor<T> Relu(const Tensor<T>& x);
template <typename T>
Tensor<T> Tanh(const Tensor<T>& x);
template <typename T>
Tensor<T> Exp(const Tensor<T>& x);
template <typename T>
Tensor<T> Abs(const Tensor<T>& x);
template <typename T>
Tensor<T> Square(const Tensor<T>& x);
template <typename T>
Tensor<T> SoftmaxLastDim(const Tensor<T>& x);

// a + b where b has the shape of a or of a trailing suffix of it (broadcast
// over the leading dimensions of a).
template <typename T>
Tensor<T> Add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> Sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> Mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> Scale(const Tensor<T>& x, T factor);
template <typename T>
Tensor<T> AddScalar(const Tensor<T>& x, T offset);

// Concatenation along the last dimension; leading dimensions must agree.
template <typename T>
Tensor<T> ConcatChannels(const Tensor<T>& a, const Tensor<T>& b);
// Columns [start, start + count) of the last dimension.
template <typename T>
Tensor<T> SliceLastDim(const Tensor<T>& x, int64_t start, int64_t count);
// Repeats a vector over time: [C] -> [T, C], [B, C] -> [B, T, C].
template <typename T>
Tensor<T> TileTime(const Tensor<T>& z, int64_t frames);

// Normalizes each row over the last dimension, then applies gain and bias.
template <typename T>
Tensor<T> LayerNorm(const Tensor<T>& x, const Tensor<T>& gain,
                    const Tensor<T>& bias, double epsilon = 1e-5);

// Inverted dropout. In training mode each element is zeroed independently
// with probability `rate` and survivors are scaled by 1 / (1 - rate).
template <typename T>
Tensor<T> Dropout(const Tensor<T>& x, double rate, bool training, Rng& rng);

enum class AttentionMask {
  kFull,
  // Each frame attends only to itself; used to isolate receptive fields.
  kDiagonal,
};

// Multi-head scaled dot-product attention over projected queries, keys and
// values of shape [T, C] or [B, T, C]. C must be divisible by `heads`.
template <typename T>
Tensor<T> MultiHeadAttention(const Tensor<T>& q, const Tensor<T>& k,
                             const Tensor<T>& v, int heads,
                             AttentionMask mask = AttentionMask::kFull);

// Reductions to a single-element tensor of shape [1].
template <typename T>
Tensor<T> Sum(const Tensor<T>& x);
template <typename T>
Tensor<T> Mean(const Tensor<T>& x);

}  // namespace svae::ops

#endif  // SVAE_OPS_H_
