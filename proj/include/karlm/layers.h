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

// Transformer building blocks: affine maps, multi-head attention, the
// position-wise MLP and post-norm transformer layers.

#ifndef KARLM_LAYERS_H_
#define KARLM_LAYERS_H_

#include <string>

#include "karlm/ops.h"
#include "karlm/random.h"
#include "karlm/tensor.h"

namespace karlm {

// Attention over an empty key/value set.
class NoAttentionTargetsError : public DimensionError {
 public:
  NoAttentionTargetsError() : DimensionError("no attention targets") {}
};

// y = x W + b with W (in x out) and b (1 x out).
struct Linear {
  Parameter *weight = nullptr;
  Parameter *bias = nullptr;
};

struct LayerNormParams {
  Parameter *gain = nullptr;
  Parameter *bias = nullptr;
};

struct AttentionParams {
  Linear query, key, value, output;
  int heads = 1;
};

enum class Activation { kGelu, kRelu };

struct FeedForwardParams {
  Linear inner, outer;
  Activation activation = Activation::kGelu;
};

// Post-norm layer: x1 = LN(x + Attn(x, m, m)); out = LN(x1 + FFN(x1)).
struct TransformerBlockParams {
  AttentionParams attention;
  LayerNormParams attention_norm;
  FeedForwardParams ffn;
  LayerNormParams output_norm;
  int dim = 0;
};

Linear make_linear(ParameterSet &params, const std::string &name, int in,
                   int out, double stddev, Rng &rng);
LayerNormParams make_layer_norm(ParameterSet &params, const std::string &name,
                                int dim);
AttentionParams make_attention(ParameterSet &params, const std::string &name,
                               int dim, int heads, double stddev, Rng &rng);
TransformerBlockParams make_transformer_block(ParameterSet &params,
                                              const std::string &name, int dim,
                                              int heads, int ffn_dim,
                                              double stddev, Rng &rng);

Tensor2 apply_linear(Tape &tape, const Linear &linear, Tensor2 x);
Tensor2 apply_layer_norm(Tape &tape, const LayerNormParams &norm, Tensor2 x);

// Scaled dot-product attention with `heads` heads, followed by the output
// projection. Rows of the result correspond to query rows.
Tensor2 multi_head_attention(Tape &tape, const AttentionParams &attn,
                             Tensor2 query, Tensor2 key, Tensor2 value);

Tensor2 feed_forward(Tape &tape, const FeedForwardParams &ffn, Tensor2 x);

// Self-attention transformer layer over the rows of `h`.
Tensor2 transformer_block(Tape &tape, const TransformerBlockParams &block,
                          Tensor2 h);

// Same layer, but queries come from `query` and keys/values from `memory`.
Tensor2 cross_attention_block(Tape &tape, const TransformerBlockParams &block,
                              Tensor2 query, Tensor2 memory);

}  // namespace karlm

#endif  // KARLM_LAYERS_H_
