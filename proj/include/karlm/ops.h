// Copyright 2026 The karlm Authors.
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

// Differentiable primitives over Tensor2. Every op records its own backward
// rule on the operands' tape.

#ifndef KARLM_OPS_H_
#define KARLM_OPS_H_

#include <span>
#include <utility>
#include <vector>

#include "karlm/tensor.h"

namespace karlm {

Tensor2 matmul(Tensor2 a, Tensor2 b);
// a * b^T
Tensor2 matmul_nt(Tensor2 a, Tensor2 b);
Tensor2 transpose(Tensor2 a);

Tensor2 add(Tensor2 a, Tensor2 b);
Tensor2 sub(Tensor2 a, Tensor2 b);
Tensor2 hadamard(Tensor2 a, Tensor2 b);
Tensor2 scale(Tensor2 a, double factor);
// Adds a 1 x cols row vector to every row of `a`.
Tensor2 add_row(Tensor2 a, Tensor2 row);

Tensor2 relu(Tensor2 a);
// Exact GELU, x * Phi(x).
Tensor2 gelu(Tensor2 a);
Tensor2 sigmoid(Tensor2 a);

// Row-wise softmax with max subtraction.
Tensor2 softmax_rows(Tensor2 x);
Tensor2 log_softmax_rows(Tensor2 x);

// Row-wise layer normalization with learned gain and bias (both 1 x cols).
Tensor2 layer_norm(Tensor2 x, Tensor2 gain, Tensor2 bias, double eps = 1e-12);

Tensor2 slice_rows(Tensor2 a, int start, int count);
Tensor2 slice_cols(Tensor2 a, int start, int count);
Tensor2 concat_rows(const std::vector<Tensor2> &parts);
Tensor2 concat_cols(const std::vector<Tensor2> &parts);
// out[i] = a[rows[i]]; repeated indices accumulate in backward.
Tensor2 gather_rows(Tensor2 a, std::span<const int> rows);

// 1x1 sum of all entries.
Tensor2 sum(Tensor2 a);
// k x 1 column of a(r_i, c_i).
Tensor2 pick(Tensor2 a, std::span<const std::pair<int, int>> cells);

}  // namespace karlm

#endif  // KARLM_OPS_H_
