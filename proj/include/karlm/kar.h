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

// Knowledge attention and recontextualization (KAR).
//
// Given word-piece states H (N x D) and the candidate mentions of one
// knowledge base, the layer
//
//   1. projects H to the entity width:        H_proj = H W1 + b1
//   2. pools each mention span into a vector:  S (C x E)
//   3. contextualizes spans with each other:   S_e = Block(S)
//   4. scores each candidate entity:           psi_mk = MLP(p_mk, s_e_m . e_mk)
//   5. drops candidates with psi < threshold, softmax-normalizes the rest and
//      averages their embeddings into e~_m (NULL row when none survive)
//   6. adds knowledge into the spans:          S'_e = S_e + E~
//   7. lets every word piece attend to spans:  H'_proj = Block(H_proj, S'_e)
//   8. projects back with a residual:          H' = H'_proj W2 + b2 + H
//
// Linking losses (softmax log-likelihood or max-margin) are computed from
// psi whenever gold entities are supplied.

#ifndef KARLM_KAR_H_
#define KARLM_KAR_H_

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "karlm/kb.h"
#include "karlm/layers.h"

namespace karlm {

enum class LinkLoss { kSoftmax, kMargin };

LinkLoss parse_link_loss(const std::string &name);
std::string link_loss_name(LinkLoss loss);

struct KarConfig {
  int entity_dim = 16;
  int heads = 4;
  int ffn_dim = 128;
  int scorer_hidden = 100;
  double threshold = 0.0;
  double margin = 0.1;
  LinkLoss loss = LinkLoss::kMargin;
  // Prior attached to the MASK entity when it replaces a candidate list.
  double mask_prior = 1.0;
};

struct KarParams {
  Linear down;        // W1 (D x E), b1
  Parameter *pool = nullptr;  // span attention vector, 1 x E
  TransformerBlockParams span_block;
  Linear score_hidden;  // 2 x hidden
  Linear score_out;     // hidden x 1
  TransformerBlockParams recontext;
  Linear up;  // W2 (E x D), b2
  Parameter *reserved = nullptr;  // NULL and MASK rows, 2 x E
  Parameter *entity_projection = nullptr;  // E_raw x E when widths differ
  int model_dim = 0;
  int entity_dim = 0;

  // Parameters of steps 1-4, the ones trained while the rest is frozen.
  std::vector<int> linker_indices() const;
  std::vector<int> all_indices() const;
};

KarParams make_kar_params(ParameterSet &params, const std::string &prefix,
                          int model_dim, const KarConfig &config,
                          const KnowledgeBase &kb, Rng &rng);

// Intermediates of one forward pass. psi and psi_tilde are ragged, one
// (M_m x 1) column per span.
struct KarActivations {
  Tensor2 h_proj;
  Tensor2 spans;          // S
  Tensor2 spans_context;  // S_e
  std::vector<Tensor2> psi;
  std::vector<Tensor2> psi_tilde;
  std::vector<bool> null_fallback;
  Tensor2 entity_mix;       // e~
  Tensor2 spans_knowledge;  // S'_e
  Tensor2 h_recontext;      // H'_proj
  Tensor2 h_out;            // H'
};

struct KarOutput {
  Tensor2 h;
  KarActivations activations;
  // Sum over supervised spans; absent when no gold was given or no span was
  // supervised.
  std::optional<Tensor2> link_loss;
  int supervised_spans = 0;
};

Tensor2 project_down(Tape &tape, const KarParams &params, Tensor2 h);

// Self-attentive pooling: per span, softmax(w . h_t) over its pieces weights
// the sum of h_t. Returns C x E (C may be zero).
Tensor2 pool_spans(Tape &tape, const KarParams &params, Tensor2 h_proj,
                   const CandidateList &spans);

// Transformer block over span vectors; identity when C == 0.
Tensor2 span_self_attention(Tape &tape, const KarParams &params, Tensor2 s);

// Embedding rows (M x E) for a list of entity ids, including NULL/MASK.
Tensor2 entity_embeddings(Tape &tape, const KarParams &params,
                          const KnowledgeBase &kb,
                          const std::vector<Candidate> &candidates);

// psi_mk = MLP([p_mk, s_e_m . e_mk]).
std::vector<Tensor2> score_candidates(Tape &tape, const KarParams &params,
                                      Tensor2 s_e,
                                      const CandidateList &candidates,
                                      const KnowledgeBase &kb);

// gold[m] indexes span m's candidate list; -1 marks an unsupervised span.
// Both losses are sums over supervised spans.
Tensor2 el_loss_softmax(const std::vector<Tensor2> &psi,
                        const std::vector<int> &gold);
Tensor2 el_loss_margin(const std::vector<Tensor2> &psi,
                       const std::vector<int> &gold, double margin);

struct EntityMix {
  std::vector<Tensor2> psi_tilde;
  std::vector<bool> null_fallback;
  Tensor2 e_tilde;  // C x E
};

EntityMix weighted_entity_embedding(Tape &tape, const KarParams &params,
                                    const std::vector<Tensor2> &psi,
                                    const CandidateList &candidates,
                                    const KnowledgeBase &kb, double threshold);

Tensor2 update_spans(Tensor2 s_e, Tensor2 e_tilde);

// Word-to-span attention block; requires C >= 1.
Tensor2 recontextualize(Tape &tape, const KarParams &params, Tensor2 h_proj,
                        Tensor2 s_prime_e);

// H'_proj W2 + b2 + H.
Tensor2 project_up(Tape &tape, const KarParams &params, Tensor2 h_recontext,
                   Tensor2 h_original);

// Full layer. With no candidate spans the input is returned unchanged.
KarOutput kar_forward(Tape &tape, const KarParams &params,
                      const KarConfig &config, const KnowledgeBase &kb,
                      Tensor2 h, const CandidateList &candidates,
                      const std::vector<int> *gold = nullptr);

// JSON dump of every intermediate keyed by symbol name: H_proj, S, S_e, psi,
// psi_tilde, e_tilde, S_prime_e, H_prime_proj, H_prime.
nlohmann::json trace_json(const KarActivations &activations);

nlohmann::json matrix_json(const Matrix &m);

}  // namespace karlm

#endif  // KARLM_KAR_H_
