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

#include "karlm/layers.h"

#include <cmath>
#include <vector>

namespace karlm {

Linear make_linear(ParameterSet &params, const std::string &name, int in,
                   int out, double stddev, Rng &rng) {
  Linear l;
  l.weight = &params.add(name + ".weight", random_normal(in, out, stddev, rng));
  l.bias = &params.add(name + ".bias", Matrix::Zero(1, out));
  return l;
}

LayerNormParams make_layer_norm(ParameterSet &params, const std::string &name,
                                int dim) {
  LayerNormParams n;
  n.gain = &params.add(name + ".gain", Matrix::Ones(1, dim));
  n.bias = &params.add(name + ".bias", Matrix::Zero(1, dim));
  return n;
}

AttentionParams make_attention(ParameterSet &params, const std::string &name,
                               int dim, int heads, double stddev, Rng &rng) {
  if (heads <= 0 || dim % heads != 0) {
    throw DimensionError("attention dim " + std::to_string(dim) +
                         " not divisible by " + std::to_string(heads) +
                         " heads");
  }
  AttentionParams a;
  a.query = make_linear(params, name + ".query", dim, dim, stddev, rng);
  a.key = make_linear(params, name + ".key", dim, dim, stddev, rng);
  a.value = make_linear(params, name + ".value", dim, dim, stddev, rng);
  a.output = make_linear(params, name + ".output", dim, dim, stddev, rng);
  a.heads = heads;
  return a;
}

TransformerBlockParams make_transformer_block(ParameterSet &params,
                                              const std::string &name, int dim,
                                              int heads, int ffn_dim,
                                              double stddev, Rng &rng) {
  TransformerBlockParams b;
  b.dim = dim;
  b.attention = make_attention(params, name + ".attn", dim, heads, stddev, rng);
  b.attention_norm = make_layer_norm(params, name + ".attn_norm", dim);
  b.ffn.inner = make_linear(params, name + ".ffn.inner", dim, ffn_dim, stddev, rng);
  b.ffn.outer = make_linear(params, name + ".ffn.outer", ffn_dim, dim, stddev, rng);
  b.ffn.activation = Activation::kGelu;
  b.output_norm = make_layer_norm(params, name + ".out_norm", dim);
  return b;
}

Tensor2 apply_linear(Tape &tape, const Linear &linear, Tensor2 x) {
  Tensor2 y = matmul(x, tape.parameter(*linear.weight));
  return add_row(y, tape.parameter(*linear.bias));
}

Tensor2 apply_layer_norm(Tape &tape, const LayerNormParams &norm, Tensor2 x) {
  return layer_norm(x, tape.parameter(*norm.gain), tape.parameter(*norm.bias));
}

Tensor2 multi_head_attention(Tape &tape, const AttentionParams &attn,
                             Tensor2 query, Tensor2 key, Tensor2 value) {
  if (key.rows() == 0 || value.rows() == 0) throw NoAttentionTargetsError();
  if (key.rows() != value.rows()) {
    throw DimensionError("attention: key " + shape_string(key.value()) +
                         " and value " + shape_string(value.value()) +
                         " row counts differ");
  }
  if (query.cols() != key.cols() || key.cols() != value.cols()) {
    throw DimensionError("attention: query " + shape_string(query.value()) +
                         " key " + shape_string(key.value()) + " value " +
                         shape_string(value.value()) + " widths differ");
  }
  const int dim = query.cols();
  if (attn.heads <= 0 || dim % attn.heads != 0) {
    throw DimensionError("attention: width " + std::to_string(dim) +
                         " not divisible by " + std::to_string(attn.heads) +
                         " heads");
  }
  const int head_dim = dim / attn.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));

  Tensor2 q = apply_linear(tape, attn.query, query);
  Tensor2 k = apply_linear(tape, attn.key, key);
  Tensor2 v = apply_linear(tape, attn.value, value);

  std::vector<Tensor2> heads;
  heads.reserve(attn.heads);
  for (int h = 0; h < attn.heads; ++h) {
    Tensor2 qh = q, kh = k, vh = v;
    if (attn.heads > 1) {
      qh = slice_cols(q, h * head_dim, head_dim);
      kh = slice_cols(k, h * head_dim, head_dim);
      vh = slice_cols(v, h * head_dim, head_dim);
    }
    Tensor2 weights = softmax_rows(scale(matmul_nt(qh, kh), inv_sqrt));
    heads.push_back(matmul(weights, vh));
  }
  Tensor2 joined = attn.heads > 1 ? concat_cols(heads) : heads[0];
  return apply_linear(tape, attn.output, joined);
}

Tensor2 feed_forward(Tape &tape, const FeedForwardParams &ffn, Tensor2 x) {
  Tensor2 inner = apply_linear(tape, ffn.inner, x);
  inner = ffn.activation == Activation::kGelu ? gelu(inner) : relu(inner);
  return apply_linear(tape, ffn.outer, inner);
}

Tensor2 cross_attention_block(Tape &tape, const TransformerBlockParams &block,
                              Tensor2 query, Tensor2 memory) {
  if (query.rows() == 0) {
    throw DimensionError("transformer block: empty sequence");
  }
  if (query.cols() != block.dim || memory.cols() != block.dim) {
    throw DimensionError("transformer block: expected width " +
                         std::to_string(block.dim) + ", got query " +
                         shape_string(query.value()) + " memory " +
                         shape_string(memory.value()));
  }
  Tensor2 attended =
      multi_head_attention(tape, block.attention, query, memory, memory);
  Tensor2 x1 = apply_layer_norm(tape, block.attention_norm, add(query, attended));
  Tensor2 ff = feed_forward(tape, block.ffn, x1);
  return apply_layer_norm(tape, block.output_norm, add(x1, ff));
}

Tensor2 transformer_block(Tape &tape, const TransformerBlockParams &block,
                          Tensor2 h) {
  return cross_attention_block(tape, block, h, h);
}

}  // namespace karlm
