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

// Miniature masked language model with knowledge-base insertion points.

#ifndef KARLM_ENCODER_H_
#define KARLM_ENCODER_H_

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "karlm/kar.h"
#include "karlm/kb.h"
#include "karlm/layers.h"
#include "karlm/vocab.h"

namespace karlm {

class OverlengthError : public std::length_error {
 public:
  using std::length_error::length_error;
};

// A KAR layer runs between block `layer` and block `layer + 1` (1-based).
struct KarInsertion {
  int layer = 0;
  std::string kb;
};

struct EncoderConfig {
  int layers = 4;
  int dim = 64;
  int heads = 4;
  int ffn_dim = 256;
  int max_len = 64;
  int vocab_size = 0;
  std::vector<KarInsertion> insertions;

  // Throws std::invalid_argument on any violated constraint.
  void validate() const;
};

struct EncoderParams {
  Parameter *token_embedding = nullptr;     // V x D, tied with the MLM output
  Parameter *position_embedding = nullptr;  // N x D
  Parameter *segment_embedding = nullptr;   // 2 x D
  LayerNormParams embedding_norm;
  std::vector<TransformerBlockParams> blocks;
  Parameter *mlm_bias = nullptr;  // 1 x V
  Linear nsp;                     // D x 1
};

// Which part of the network a parameter belongs to.
struct ParamRole {
  enum class Kind { kEmbedding, kBlock, kHead, kKar };
  Kind kind = Kind::kEmbedding;
  int layer = 0;  // 1-based block index for kBlock
  int kb = -1;    // slot index for kKar
};

struct KbSlot {
  std::shared_ptr<const KnowledgeBase> kb;
  KarConfig config;
  KarParams params;
  int layer = 0;
};

struct KbSpec {
  std::shared_ptr<const KnowledgeBase> kb;
  KarConfig config;
};

// Encoder, output heads and one KAR slot per configured insertion. Holds
// parameter pointers into its own ParameterSet, so it is move-only.
class KnowledgeModel {
 public:
  KnowledgeModel(std::shared_ptr<const Vocabulary> vocab, EncoderConfig config,
                 std::vector<KbSpec> kbs, uint64_t seed);
  KnowledgeModel(const KnowledgeModel &) = delete;
  KnowledgeModel &operator=(const KnowledgeModel &) = delete;

  const Vocabulary &vocab() const { return *vocab_; }
  std::shared_ptr<const Vocabulary> vocab_ptr() const { return vocab_; }
  const EncoderConfig &config() const { return config_; }
  ParameterSet &params() { return params_; }
  const ParameterSet &params() const { return params_; }
  const EncoderParams &encoder() const { return encoder_; }

  int kb_count() const { return static_cast<int>(slots_.size()); }
  KbSlot &slot(int j) { return slots_[j]; }
  const KbSlot &slot(int j) const { return slots_[j]; }
  // -1 when absent.
  int slot_index(const std::string &kb_name) const;

  // KAR layers 0..active-1 run during encode; later ones are skipped. All
  // are active by default.
  int active_kbs() const { return active_; }
  void set_active_kbs(int n);

  const ParamRole &role(int param_index) const { return roles_[param_index]; }

 private:
  std::shared_ptr<const Vocabulary> vocab_;
  EncoderConfig config_;
  ParameterSet params_;
  EncoderParams encoder_;
  std::vector<KbSlot> slots_;
  std::vector<ParamRole> roles_;
  int active_ = 0;
};

// [CLS] a [SEP] (b [SEP]) with segment ids and per-KB candidate lists whose
// spans index the framed sequence.
struct EncoderInput {
  std::vector<int> ids;
  std::vector<int> segments;
  std::vector<CandidateList> candidates;
};

// Frames the pair and runs every KB's candidate selector on it. Throws
// OverlengthError if the framed length exceeds config.max_len.
EncoderInput frame_pair(const KnowledgeModel &model, std::span<const int> a,
                        std::span<const int> b);
EncoderInput frame_pair(const KnowledgeModel &model, std::span<const int> a,
                        std::span<const int> b, bool select);

struct EncoderState {
  std::vector<Tensor2> layers;  // H_0 .. H_L (fewer when stopped early)
  std::vector<std::optional<KarOutput>> kar;  // per KB slot
};

// Per-slot gold indices, see kar_forward. Null entries mean no supervision.
using LinkSupervision = std::vector<const std::vector<int> *>;

// Embeddings, then the blocks with each active KAR after its layer.
// `stop_after_layer` >= 0 ends the pass after that block's KAR.
EncoderState encode(Tape &tape, const KnowledgeModel &model,
                    const EncoderInput &input,
                    const LinkSupervision *gold = nullptr,
                    int stop_after_layer = -1);

struct MaskedTarget {
  int position = 0;
  int gold = 0;
};

// Log-probabilities over the vocabulary at the given positions (k x V).
Tensor2 mlm_log_probs(Tape &tape, const KnowledgeModel &model,
                      const EncoderState &state, std::span<const int> positions);

// Mean negative log-likelihood of the gold pieces.
Tensor2 mlm_loss(Tape &tape, const KnowledgeModel &model,
                 const EncoderState &state, std::span<const MaskedTarget> targets);

// Binary cross-entropy of a linear head on the final [CLS] vector.
Tensor2 nsp_loss(Tape &tape, const KnowledgeModel &model,
                 const EncoderState &state, bool is_next);

struct LossReport {
  double mlm = 0.0;
  double nsp = 0.0;
  std::vector<double> el;
  double total = 0.0;

  void finalize();
};

}  // namespace karlm

#endif  // KARLM_ENCODER_H_
