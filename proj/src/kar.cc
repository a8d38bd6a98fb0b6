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

#include "karlm/kar.h"

#include <cmath>
#include <stdexcept>

#include "karlm/linalg.h"

namespace karlm {

LinkLoss parse_link_loss(const std::string &name) {
  if (name == "softmax") return LinkLoss::kSoftmax;
  if (name == "margin") return LinkLoss::kMargin;
  throw std::invalid_argument("unknown linking loss '" + name +
                              "' (expected softmax or margin)");
}

std::string link_loss_name(LinkLoss loss) {
  return loss == LinkLoss::kSoftmax ? "softmax" : "margin";
}

namespace {

void append_linear(std::vector<int> &out, const Linear &l) {
  out.push_back(l.weight->index);
  out.push_back(l.bias->index);
}

void append_block(std::vector<int> &out, const TransformerBlockParams &b) {
  append_linear(out, b.attention.query);
  append_linear(out, b.attention.key);
  append_linear(out, b.attention.value);
  append_linear(out, b.attention.output);
  out.push_back(b.attention_norm.gain->index);
  out.push_back(b.attention_norm.bias->index);
  append_linear(out, b.ffn.inner);
  append_linear(out, b.ffn.outer);
  out.push_back(b.output_norm.gain->index);
  out.push_back(b.output_norm.bias->index);
}

}  // namespace

std::vector<int> KarParams::linker_indices() const {
  std::vector<int> out;
  append_linear(out, down);
  out.push_back(pool->index);
  append_block(out, span_block);
  append_linear(out, score_hidden);
  append_linear(out, score_out);
  out.push_back(reserved->index);
  if (entity_projection != nullptr) out.push_back(entity_projection->index);
  return out;
}

std::vector<int> KarParams::all_indices() const {
  std::vector<int> out = linker_indices();
  append_block(out, recontext);
  append_linear(out, up);
  return out;
}

KarParams make_kar_params(ParameterSet &params, const std::string &prefix,
                          int model_dim, const KarConfig &config,
                          const KnowledgeBase &kb, Rng &rng) {
  const int e = config.entity_dim;
  constexpr double kStd = 0.02;
  KarParams p;
  p.model_dim = model_dim;
  p.entity_dim = e;
  p.down = make_linear(params, prefix + ".down", model_dim, e,
                       1.0 / std::sqrt(static_cast<double>(model_dim)), rng);
  p.pool = &params.add(prefix + ".pool", random_normal(1, e, kStd, rng));
  p.span_block = make_transformer_block(params, prefix + ".span", e,
                                        config.heads, config.ffn_dim, kStd, rng);
  p.score_hidden = make_linear(params, prefix + ".score.hidden", 2,
                               config.scorer_hidden, 1.0 / std::sqrt(2.0), rng);
  p.score_out = make_linear(
      params, prefix + ".score.out", config.scorer_hidden, 1,
      1.0 / std::sqrt(static_cast<double>(config.scorer_hidden)), rng);
  p.recontext = make_transformer_block(params, prefix + ".recontext", e,
                                       config.heads, config.ffn_dim, kStd, rng);
  p.up = make_linear(params, prefix + ".up", e, model_dim, kStd, rng);
  p.reserved = &params.add(prefix + ".reserved", random_normal(2, e, kStd, rng));
  if (kb.embedding_dim() != e) {
    const int raw = kb.embedding_dim();
    p.entity_projection = &params.add(
        prefix + ".entity_projection",
        random_normal(raw, e, 1.0 / std::sqrt(static_cast<double>(raw)), rng));
  }
  p.up.weight->value = pseudoinverse(p.down.weight->value);
  p.up.bias->value.setZero();
  return p;
}

Tensor2 project_down(Tape &tape, const KarParams &params, Tensor2 h) {
  if (h.cols() != params.model_dim) {
    throw DimensionError("project_down: expected width " +
                         std::to_string(params.model_dim) + ", got " +
                         shape_string(h.value()));
  }
  return apply_linear(tape, params.down, h);
}

Tensor2 pool_spans(Tape &tape, const KarParams &params, Tensor2 h_proj,
                   const CandidateList &spans) {
  if (spans.empty()) return tape.constant(Matrix::Zero(0, h_proj.cols()));
  Tensor2 w = tape.parameter(*params.pool);
  std::vector<Tensor2> rows;
  rows.reserve(spans.size());
  for (const CandidateSpan &span : spans.spans) {
    if (span.start < 0 || span.end < span.start || span.end >= h_proj.rows()) {
      throw DimensionError("span [" + std::to_string(span.start) + ", " +
                           std::to_string(span.end) + "] outside sequence of " +
                           std::to_string(h_proj.rows()) + " pieces");
    }
    Tensor2 pieces = slice_rows(h_proj, span.start, span.end - span.start + 1);
    Tensor2 weights = softmax_rows(matmul_nt(w, pieces));
    rows.push_back(matmul(weights, pieces));
  }
  return rows.size() == 1 ? rows[0] : concat_rows(rows);
}

Tensor2 span_self_attention(Tape &tape, const KarParams &params, Tensor2 s) {
  if (s.rows() == 0) return s;
  return transformer_block(tape, params.span_block, s);
}

Tensor2 entity_embeddings(Tape &tape, const KarParams &params,
                          const KnowledgeBase &kb,
                          const std::vector<Candidate> &candidates) {
  const int k = kb.entity_count();
  std::vector<int> real_ids, reserved_rows, order;
  for (const Candidate &c : candidates) {
    if (c.entity >= 0 && c.entity < k) {
      order.push_back(static_cast<int>(real_ids.size()));
      real_ids.push_back(c.entity);
    } else if (c.entity == kb.null_id() || c.entity == kb.mask_id()) {
      order.push_back(-1 - static_cast<int>(reserved_rows.size()));
      reserved_rows.push_back(c.entity - k);
    } else {
      throw std::out_of_range("unknown entity id " + std::to_string(c.entity) +
                              " for knowledge base " + kb.name());
    }
  }
  std::vector<Tensor2> parts;
  if (!real_ids.empty()) {
    Matrix raw(static_cast<Eigen::Index>(real_ids.size()), kb.embedding_dim());
    for (size_t i = 0; i < real_ids.size(); ++i) {
      raw.row(static_cast<Eigen::Index>(i)) = kb.embeddings().row(real_ids[i]);
    }
    Tensor2 rows = tape.constant(std::move(raw));
    if (params.entity_projection != nullptr) {
      rows = project_entity_embeddings(rows, tape.parameter(*params.entity_projection));
    } else if (rows.cols() != params.entity_dim) {
      throw DimensionError("entity embeddings of width " +
                           std::to_string(rows.cols()) + " for entity dim " +
                           std::to_string(params.entity_dim));
    }
    parts.push_back(rows);
  }
  if (!reserved_rows.empty()) {
    parts.push_back(gather_rows(tape.parameter(*params.reserved), reserved_rows));
  }
  if (parts.size() == 1 && (real_ids.empty() || reserved_rows.empty())) {
    return parts[0];
  }
  Tensor2 stacked = concat_rows(parts);
  const int offset = static_cast<int>(real_ids.size());
  std::vector<int> perm;
  perm.reserve(order.size());
  for (int o : order) perm.push_back(o >= 0 ? o : offset + (-1 - o));
  return gather_rows(stacked, perm);
}

namespace {

Tensor2 score_span(Tape &tape, const KarParams &params, Tensor2 span_vector,
                   Tensor2 embeddings, const std::vector<Candidate> &cands) {
  Matrix priors(static_cast<Eigen::Index>(cands.size()), 1);
  for (size_t k = 0; k < cands.size(); ++k) {
    priors(static_cast<Eigen::Index>(k), 0) = cands[k].prior;
  }
  Tensor2 dots = matmul_nt(embeddings, span_vector);
  Tensor2 features = concat_cols({tape.constant(std::move(priors)), dots});
  Tensor2 hidden = relu(apply_linear(tape, params.score_hidden, features));
  return apply_linear(tape, params.score_out, hidden);
}

// Softmax over the entries of a column that are >= threshold; the others are
// exactly zero and receive no gradient.
Tensor2 threshold_softmax(Tensor2 psi, double threshold, bool *any_survivor) {
  Tape &t = *psi.tape();
  const Matrix &v = psi.value();
  Matrix out = Matrix::Zero(v.rows(), 1);
  double best = -std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < v.rows(); ++k) {
    if (v(k, 0) >= threshold) best = std::max(best, v(k, 0));
  }
  *any_survivor = std::isfinite(best);
  if (*any_survivor) {
    double z = 0.0;
    for (Eigen::Index k = 0; k < v.rows(); ++k) {
      if (v(k, 0) >= threshold) {
        out(k, 0) = std::exp(v(k, 0) - best);
        z += out(k, 0);
      }
    }
    out /= z;
  }
  const int out_id = t.size();
  return t.record(std::move(out), {psi}, [psi, out_id](Tape &t, const Matrix &g) {
    const Matrix &y = t.value(out_id);
    const double dot = g.cwiseProduct(y).sum();
    t.grad(psi) += y.cwiseProduct((g.array() - dot).matrix());
  });
}

void check_gold(const std::vector<Tensor2> &psi, const std::vector<int> &gold) {
  if (gold.size() != psi.size()) {
    throw std::out_of_range("gold labels for " + std::to_string(gold.size()) +
                            " spans, scores for " + std::to_string(psi.size()));
  }
  for (size_t m = 0; m < gold.size(); ++m) {
    if (gold[m] < -1 || gold[m] >= psi[m].rows()) {
      throw std::out_of_range("gold index " + std::to_string(gold[m]) +
                              " out of range for span " + std::to_string(m) +
                              " with " + std::to_string(psi[m].rows()) +
                              " candidates");
    }
  }
}

Tape &first_tape(const std::vector<Tensor2> &psi) {
  if (psi.empty()) throw ContractError("linking loss without scores");
  return *psi[0].tape();
}

}  // namespace

std::vector<Tensor2> score_candidates(Tape &tape, const KarParams &params,
                                      Tensor2 s_e,
                                      const CandidateList &candidates,
                                      const KnowledgeBase &kb) {
  std::vector<Tensor2> psi;
  psi.reserve(candidates.size());
  for (int m = 0; m < candidates.size(); ++m) {
    const auto &cands = candidates.spans[m].candidates;
    Tensor2 emb = entity_embeddings(tape, params, kb, cands);
    psi.push_back(score_span(tape, params, slice_rows(s_e, m, 1), emb, cands));
  }
  return psi;
}

Tensor2 el_loss_softmax(const std::vector<Tensor2> &psi,
                        const std::vector<int> &gold) {
  Tape &t = first_tape(psi);
  check_gold(psi, gold);
  std::vector<Tensor2> terms;
  for (size_t m = 0; m < psi.size(); ++m) {
    if (gold[m] < 0) continue;
    Tensor2 log_probs = log_softmax_rows(transpose(psi[m]));
    std::pair<int, int> cell{0, gold[m]};
    terms.push_back(pick(log_probs, std::span(&cell, 1)));
  }
  if (terms.empty()) return t.constant(Matrix::Zero(1, 1));
  return scale(sum(concat_rows(terms)), -1.0);
}

Tensor2 el_loss_margin(const std::vector<Tensor2> &psi,
                       const std::vector<int> &gold, double margin) {
  Tape &t = first_tape(psi);
  check_gold(psi, gold);
  std::vector<Tensor2> terms;
  for (size_t m = 0; m < psi.size(); ++m) {
    if (gold[m] < 0) continue;
    const int rows = psi[m].rows();
    Matrix sign = Matrix::Ones(rows, 1);
    sign(gold[m], 0) = -1.0;
    Tensor2 signed_psi = hadamard(psi[m], t.constant(std::move(sign)));
    Tensor2 hinge = relu(add(signed_psi, t.constant(Matrix::Constant(rows, 1, margin))));
    terms.push_back(sum(hinge));
  }
  if (terms.empty()) return t.constant(Matrix::Zero(1, 1));
  return terms.size() == 1 ? terms[0] : sum(concat_rows(terms));
}

namespace {

EntityMix mix_entities(Tape &tape, const KarParams &params,
                       const std::vector<Tensor2> &psi,
                       const std::vector<Tensor2> &embeddings,
                       double threshold) {
  EntityMix mix;
  std::vector<Tensor2> rows;
  for (size_t m = 0; m < psi.size(); ++m) {
    bool survivor = false;
    Tensor2 weights = threshold_softmax(psi[m], threshold, &survivor);
    mix.psi_tilde.push_back(weights);
    mix.null_fallback.push_back(!survivor);
    if (survivor) {
      rows.push_back(matmul(transpose(weights), embeddings[m]));
    } else {
      rows.push_back(slice_rows(tape.parameter(*params.reserved), 0, 1));
    }
  }
  mix.e_tilde = rows.empty() ? tape.constant(Matrix::Zero(0, params.entity_dim))
                             : (rows.size() == 1 ? rows[0] : concat_rows(rows));
  return mix;
}

}  // namespace

EntityMix weighted_entity_embedding(Tape &tape, const KarParams &params,
                                    const std::vector<Tensor2> &psi,
                                    const CandidateList &candidates,
                                    const KnowledgeBase &kb, double threshold) {
  if (psi.size() != candidates.spans.size()) {
    throw DimensionError("scores for " + std::to_string(psi.size()) +
                         " spans, candidates for " +
                         std::to_string(candidates.size()));
  }
  std::vector<Tensor2> embeddings;
  for (const CandidateSpan &span : candidates.spans) {
    embeddings.push_back(entity_embeddings(tape, params, kb, span.candidates));
  }
  return mix_entities(tape, params, psi, embeddings, threshold);
}

Tensor2 update_spans(Tensor2 s_e, Tensor2 e_tilde) { return add(s_e, e_tilde); }

Tensor2 recontextualize(Tape &tape, const KarParams &params, Tensor2 h_proj,
                        Tensor2 s_prime_e) {
  return cross_attention_block(tape, params.recontext, h_proj, s_prime_e);
}

Tensor2 project_up(Tape &tape, const KarParams &params, Tensor2 h_recontext,
                   Tensor2 h_original) {
  Tensor2 back = apply_linear(tape, params.up, h_recontext);
  if (back.rows() != h_original.rows() || back.cols() != h_original.cols()) {
    throw DimensionError("project_up: projected " + shape_string(back.value()) +
                         " vs residual " + shape_string(h_original.value()));
  }
  return add(back, h_original);
}

KarOutput kar_forward(Tape &tape, const KarParams &params,
                      const KarConfig &config, const KnowledgeBase &kb,
                      Tensor2 h, const CandidateList &candidates,
                      const std::vector<int> *gold) {
  KarOutput out;
  if (candidates.empty()) {
    out.h = h;
    out.activations.h_out = h;
    return out;
  }
  KarActivations &act = out.activations;
  act.h_proj = project_down(tape, params, h);
  act.spans = pool_spans(tape, params, act.h_proj, candidates);
  act.spans_context = span_self_attention(tape, params, act.spans);

  std::vector<Tensor2> embeddings;
  for (int m = 0; m < candidates.size(); ++m) {
    const auto &cands = candidates.spans[m].candidates;
    embeddings.push_back(entity_embeddings(tape, params, kb, cands));
    act.psi.push_back(score_span(tape, params, slice_rows(act.spans_context, m, 1),
                                 embeddings.back(), cands));
  }

  if (gold != nullptr) {
    for (int g : *gold) out.supervised_spans += g >= 0 ? 1 : 0;
    if (out.supervised_spans > 0) {
      out.link_loss = config.loss == LinkLoss::kSoftmax
                          ? el_loss_softmax(act.psi, *gold)
                          : el_loss_margin(act.psi, *gold, config.margin);
    } else {
      check_gold(act.psi, *gold);
    }
  }

  EntityMix mix = mix_entities(tape, params, act.psi, embeddings, config.threshold);
  act.psi_tilde = std::move(mix.psi_tilde);
  act.null_fallback = std::move(mix.null_fallback);
  act.entity_mix = mix.e_tilde;
  act.spans_knowledge = update_spans(act.spans_context, act.entity_mix);
  act.h_recontext = recontextualize(tape, params, act.h_proj, act.spans_knowledge);
  act.h_out = project_up(tape, params, act.h_recontext, h);
  out.h = act.h_out;
  return out;
}

nlohmann::json matrix_json(const Matrix &m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

nlohmann::json trace_json(const KarActivations &act) {
  nlohmann::json out;
  auto column_list = [](const std::vector<Tensor2> &cols) {
    nlohmann::json list = nlohmann::json::array();
    for (const Tensor2 &c : cols) {
      nlohmann::json v = nlohmann::json::array();
      for (Eigen::Index k = 0; k < c.value().rows(); ++k) v.push_back(c.value()(k, 0));
      list.push_back(std::move(v));
    }
    return list;
  };
  if (!act.h_proj.valid()) {
    out["H_prime"] = matrix_json(act.h_out.value());
    return out;
  }
  out["H_proj"] = matrix_json(act.h_proj.value());
  out["S"] = matrix_json(act.spans.value());
  out["S_e"] = matrix_json(act.spans_context.value());
  out["psi"] = column_list(act.psi);
  out["psi_tilde"] = column_list(act.psi_tilde);
  out["null_fallback"] = act.null_fallback;
  out["e_tilde"] = matrix_json(act.entity_mix.value());
  out["S_prime_e"] = matrix_json(act.spans_knowledge.value());
  out["H_prime_proj"] = matrix_json(act.h_recontext.value());
  out["H_prime"] = matrix_json(act.h_out.value());
  return out;
}

}  // namespace karlm
