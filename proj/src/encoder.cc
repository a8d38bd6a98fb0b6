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

#include "karlm/encoder.h"

#include <stdexcept>

namespace karlm {

void EncoderConfig::validate() const {
  auto fail = [](const std::string &msg) {
    throw std::invalid_argument("encoder config: " + msg);
  };
  if (layers <= 0) fail("layers must be positive");
  if (dim <= 0 || heads <= 0 || dim % heads != 0) {
    fail("dim " + std::to_string(dim) + " not divisible by heads " +
         std::to_string(heads));
  }
  if (ffn_dim <= 0) fail("ffn_dim must be positive");
  if (max_len < 3) fail("max_len must be at least 3");
  if (vocab_size <= 0) fail("vocab_size must be positive");
  int previous = 0;
  for (const KarInsertion &ins : insertions) {
    if (ins.layer < 1 || ins.layer > layers - 1) {
      fail("insertion layer " + std::to_string(ins.layer) + " not in 1.." +
           std::to_string(layers - 1));
    }
    if (ins.layer <= previous) {
      fail("insertion layers must be strictly increasing");
    }
    previous = ins.layer;
  }
}

KnowledgeModel::KnowledgeModel(std::shared_ptr<const Vocabulary> vocab,
                               EncoderConfig config, std::vector<KbSpec> kbs,
                               uint64_t seed)
    : vocab_(std::move(vocab)), config_(std::move(config)) {
  if (config_.vocab_size == 0) config_.vocab_size = vocab_->size();
  if (config_.vocab_size != vocab_->size()) {
    throw std::invalid_argument("encoder config vocab_size " +
                                std::to_string(config_.vocab_size) +
                                " != vocabulary size " +
                                std::to_string(vocab_->size()));
  }
  config_.validate();
  if (kbs.size() != config_.insertions.size()) {
    throw std::invalid_argument(std::to_string(config_.insertions.size()) +
                                " insertions but " + std::to_string(kbs.size()) +
                                " knowledge bases");
  }

  constexpr double kStd = 0.02;
  const int d = config_.dim;
  auto tag = [this](ParamRole role) {
    while (static_cast<int>(roles_.size()) < params_.size()) roles_.push_back(role);
  };

  Rng rng = substream(seed, "init.embeddings");
  encoder_.token_embedding =
      &params_.add("embeddings.token", random_normal(config_.vocab_size, d, kStd, rng));
  encoder_.position_embedding =
      &params_.add("embeddings.position", random_normal(config_.max_len, d, kStd, rng));
  encoder_.segment_embedding =
      &params_.add("embeddings.segment", random_normal(2, d, kStd, rng));
  encoder_.embedding_norm = make_layer_norm(params_, "embeddings.norm", d);
  tag({ParamRole::Kind::kEmbedding, 0, -1});

  for (int layer = 1; layer <= config_.layers; ++layer) {
    Rng block_rng = substream(seed, "init.block", layer);
    encoder_.blocks.push_back(make_transformer_block(
        params_, "block" + std::to_string(layer), d, config_.heads,
        config_.ffn_dim, kStd, block_rng));
    tag({ParamRole::Kind::kBlock, layer, -1});
  }

  Rng head_rng = substream(seed, "init.heads");
  encoder_.mlm_bias = &params_.add("mlm.bias", Matrix::Zero(1, config_.vocab_size));
  encoder_.nsp = make_linear(params_, "nsp", d, 1, kStd, head_rng);
  tag({ParamRole::Kind::kHead, 0, -1});

  for (size_t j = 0; j < kbs.size(); ++j) {
    const KarInsertion &ins = config_.insertions[j];
    if (!kbs[j].kb || kbs[j].kb->name() != ins.kb) {
      throw std::invalid_argument("knowledge base " + std::to_string(j) +
                                  " does not match insertion '" + ins.kb + "'");
    }
    Rng kar_rng = substream(seed, "init.kar." + ins.kb);
    KbSlot slot;
    slot.kb = kbs[j].kb;
    slot.config = kbs[j].config;
    slot.layer = ins.layer;
    slot.params = make_kar_params(params_, "kar." + ins.kb, d, slot.config,
                                  *slot.kb, kar_rng);
    slots_.push_back(std::move(slot));
    tag({ParamRole::Kind::kKar, 0, static_cast<int>(j)});
  }
  active_ = kb_count();
}

int KnowledgeModel::slot_index(const std::string &kb_name) const {
  for (int j = 0; j < kb_count(); ++j) {
    if (slots_[j].kb->name() == kb_name) return j;
  }
  return -1;
}

void KnowledgeModel::set_active_kbs(int n) {
  if (n < 0 || n > kb_count()) {
    throw std::out_of_range("active KB count " + std::to_string(n) +
                            " outside 0.." + std::to_string(kb_count()));
  }
  active_ = n;
}

EncoderInput frame_pair(const KnowledgeModel &model, std::span<const int> a,
                        std::span<const int> b) {
  return frame_pair(model, a, b, true);
}

EncoderInput frame_pair(const KnowledgeModel &model, std::span<const int> a,
                        std::span<const int> b, bool select) {
  const Vocabulary &vocab = model.vocab();
  const int total = static_cast<int>(a.size() + b.size()) + (b.empty() ? 2 : 3);
  if (total > model.config().max_len) {
    throw OverlengthError("framed sequence of " + std::to_string(total) +
                          " pieces exceeds max_len " +
                          std::to_string(model.config().max_len));
  }
  EncoderInput in;
  in.ids.reserve(total);
  in.ids.push_back(vocab.cls());
  in.ids.insert(in.ids.end(), a.begin(), a.end());
  in.ids.push_back(vocab.sep());
  in.segments.assign(in.ids.size(), 0);
  if (!b.empty()) {
    in.ids.insert(in.ids.end(), b.begin(), b.end());
    in.ids.push_back(vocab.sep());
    in.segments.resize(in.ids.size(), 1);
  }
  in.candidates.resize(model.kb_count());
  if (select) {
    for (int j = 0; j < model.kb_count(); ++j) {
      in.candidates[j] = select_candidates(in.ids, vocab, *model.slot(j).kb);
    }
  }
  return in;
}

EncoderState encode(Tape &tape, const KnowledgeModel &model,
                    const EncoderInput &input, const LinkSupervision *gold,
                    int stop_after_layer) {
  const EncoderConfig &cfg = model.config();
  const EncoderParams &enc = model.encoder();
  const int n = static_cast<int>(input.ids.size());
  if (n == 0) throw DimensionError("encode: empty sequence");
  if (n > cfg.max_len) {
    throw OverlengthError("sequence of " + std::to_string(n) +
                          " pieces exceeds max_len " + std::to_string(cfg.max_len));
  }
  if (static_cast<int>(input.segments.size()) != n) {
    throw DimensionError("encode: " + std::to_string(input.segments.size()) +
                         " segment ids for " + std::to_string(n) + " pieces");
  }
  if (static_cast<int>(input.candidates.size()) < model.active_kbs()) {
    throw DimensionError("encode: candidate lists for " +
                         std::to_string(input.candidates.size()) +
                         " knowledge bases, " +
                         std::to_string(model.active_kbs()) + " active");
  }
  for (int id : input.ids) {
    if (id < 0 || id >= cfg.vocab_size) {
      throw DimensionError("encode: word piece id " + std::to_string(id) +
                           " out of range");
    }
  }

  std::vector<int> positions(n);
  for (int i = 0; i < n; ++i) positions[i] = i;
  Tensor2 h = add(add(gather_rows(tape.parameter(*enc.token_embedding), input.ids),
                      gather_rows(tape.parameter(*enc.position_embedding), positions)),
                  gather_rows(tape.parameter(*enc.segment_embedding), input.segments));
  h = apply_layer_norm(tape, enc.embedding_norm, h);

  EncoderState state;
  state.kar.resize(model.kb_count());
  state.layers.push_back(h);
  int next_slot = 0;
  for (int layer = 1; layer <= cfg.layers; ++layer) {
    h = transformer_block(tape, enc.blocks[layer - 1], h);
    while (next_slot < model.active_kbs() &&
           model.slot(next_slot).layer == layer) {
      const KbSlot &slot = model.slot(next_slot);
      const std::vector<int> *slot_gold =
          gold != nullptr && next_slot < static_cast<int>(gold->size())
              ? (*gold)[next_slot]
              : nullptr;
      KarOutput out = kar_forward(tape, slot.params, slot.config, *slot.kb, h,
                                  input.candidates[next_slot], slot_gold);
      h = out.h;
      state.kar[next_slot] = std::move(out);
      ++next_slot;
    }
    state.layers.push_back(h);
    if (layer == stop_after_layer) break;
  }
  return state;
}

Tensor2 mlm_log_probs(Tape &tape, const KnowledgeModel &model,
                      const EncoderState &state, std::span<const int> positions) {
  const Tensor2 &top = state.layers.back();
  if (static_cast<int>(state.layers.size()) != model.config().layers + 1) {
    throw ContractError("masked LM head needs the final encoder layer");
  }
  Tensor2 rows = gather_rows(top, positions);
  const EncoderParams &enc = model.encoder();
  Tensor2 logits = add_row(matmul_nt(rows, tape.parameter(*enc.token_embedding)),
                           tape.parameter(*enc.mlm_bias));
  return log_softmax_rows(logits);
}

Tensor2 mlm_loss(Tape &tape, const KnowledgeModel &model,
                 const EncoderState &state, std::span<const MaskedTarget> targets) {
  if (targets.empty()) throw ContractError("mlm_loss: no masked positions");
  const int n = state.layers.back().rows();
  std::vector<int> positions;
  std::vector<std::pair<int, int>> cells;
  for (size_t i = 0; i < targets.size(); ++i) {
    if (targets[i].position < 0 || targets[i].position >= n) {
      throw std::out_of_range("mlm_loss: target position " +
                              std::to_string(targets[i].position) +
                              " outside sequence of " + std::to_string(n));
    }
    if (targets[i].gold < 0 || targets[i].gold >= model.config().vocab_size) {
      throw std::out_of_range("mlm_loss: gold id " +
                              std::to_string(targets[i].gold) + " out of range");
    }
    positions.push_back(targets[i].position);
    cells.emplace_back(static_cast<int>(i), targets[i].gold);
  }
  Tensor2 log_probs = mlm_log_probs(tape, model, state, positions);
  return scale(sum(pick(log_probs, cells)),
               -1.0 / static_cast<double>(targets.size()));
}

Tensor2 nsp_loss(Tape &tape, const KnowledgeModel &model,
                 const EncoderState &state, bool is_next) {
  Tensor2 cls = slice_rows(state.layers.back(), 0, 1);
  Tensor2 logit = apply_linear(tape, model.encoder().nsp, cls);
  Tensor2 pair = concat_cols({tape.constant(Matrix::Zero(1, 1)), logit});
  std::pair<int, int> cell{0, is_next ? 1 : 0};
  return scale(pick(log_softmax_rows(pair), std::span(&cell, 1)), -1.0);
}

void LossReport::finalize() {
  total = mlm + nsp;
  for (double e : el) total += e;
}

}  // namespace karlm
