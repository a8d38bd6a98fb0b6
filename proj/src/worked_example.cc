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

#include "karlm/worked_example.h"

#include <cmath>

#include "karlm/linalg.h"
#include "karlm/random.h"

namespace karlm {

namespace {

constexpr int kModelDim = 4;
constexpr int kPieces = 4;

bool ends_with(const std::string &s, const std::string &suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

double worked_value(const std::string &name, int row, int col) {
  int tag = 0;
  for (unsigned char ch : name) tag += ch;
  tag %= 97;
  double v = 0.5 * std::sin(1.0 + 0.7 * row + 1.3 * col + 0.9 * row * col + 0.37 * tag);
  return ends_with(name, ".gain") ? 1.0 + v : v;
}

WorkedExample make_worked_example() {
  KarConfig config;
  config.entity_dim = 3;
  config.heads = 1;
  config.ffn_dim = 2;
  config.scorer_hidden = 2;
  config.threshold = -0.5;

  Matrix table(2, 3);
  table << 0.5, -0.25, 1.0, -1.0, 0.5, 0.25;
  KnowledgeBase kb =
      KnowledgeBase::build("worked", {"alpha", "beta"}, table, {}, {});

  WorkedExample ex{ParameterSet(), config, std::move(kb), KarParams(), Matrix(),
                   CandidateList()};
  Rng rng(0);
  ex.kar = make_kar_params(ex.params, "kar", kModelDim, config, ex.kb, rng);
  for (int i = 0; i < ex.params.size(); ++i) {
    Parameter &p = ex.params.at(i);
    for (Eigen::Index r = 0; r < p.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.value.cols(); ++c) {
        p.value(r, c) = worked_value(p.name, static_cast<int>(r), static_cast<int>(c));
      }
    }
  }
  ex.kar.up.weight->value = pseudoinverse(ex.kar.down.weight->value);
  ex.kar.up.bias->value.setZero();

  ex.h.resize(kPieces, kModelDim);
  for (int i = 0; i < kPieces; ++i) {
    for (int j = 0; j < kModelDim; ++j) ex.h(i, j) = std::sin(1.0 + i + 0.5 * j + 0.3 * i * j);
  }
  ex.spans.spans.push_back({1, 2, {{0, 0.75}, {ex.kb.null_id(), 0.25}}});
  return ex;
}

nlohmann::json worked_example_trace() {
  WorkedExample ex = make_worked_example();
  Tape tape;
  KarOutput out = kar_forward(tape, ex.kar, ex.config, ex.kb,
                              tape.constant(ex.h), ex.spans);
  nlohmann::json j = trace_json(out.activations);
  nlohmann::json cands = nlohmann::json::array();
  for (const Candidate &c : ex.spans.spans[0].candidates) {
    cands.push_back({c.entity, c.prior});
  }
  j["instance"] = {{"model_dim", kModelDim},
                   {"entity_dim", ex.config.entity_dim},
                   {"pieces", kPieces},
                   {"ffn_dim", ex.config.ffn_dim},
                   {"scorer_hidden", ex.config.scorer_hidden},
                   {"heads", ex.config.heads},
                   {"threshold", ex.config.threshold},
                   {"span", {1, 2}},
                   {"candidates", cands},
                   {"kb_embeddings", matrix_json(ex.kb.embeddings())},
                   {"H", matrix_json(ex.h)}};
  return j;
}

}  // namespace karlm
