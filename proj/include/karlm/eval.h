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

// Intrinsic probes: masked-LM perplexity, fact-recall MRR, strong-match
// entity-linking F1 and candidate-restricted linking accuracy.

#ifndef KARLM_EVAL_H_
#define KARLM_EVAL_H_

#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "karlm/training.h"

namespace karlm {

// ---------------------------------------------------------------------------
// Perplexity.

struct NllSum {
  double sum = 0.0;
  int positions = 0;
};

// exp(sum / positions); throws ContractError when positions == 0.
double perplexity_from(const NllSum &nll);

// Masks example i with the sub-stream (seed, "ppl", offset + i) and sums the
// masked-position NLL. Splitting a corpus into shards with matching offsets
// and adding the sums gives the same result as one pass.
NllSum masked_nll(const KnowledgeModel &model, const std::vector<PairExample> &corpus,
                  const MaskingConfig &masking, uint64_t seed, int offset = 0);

double perplexity(const KnowledgeModel &model, const std::vector<PairExample> &corpus,
                  const MaskingConfig &masking, uint64_t seed);

// ---------------------------------------------------------------------------
// Fact-recall probe.

class ProbeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ProbeTuple {
  std::string relation;
  std::string template_text;  // contains SUBJ and OBJ exactly once
  std::string subject;
  std::string object;
};

std::vector<ProbeTuple> load_probes(const std::string &path);
void save_probes(const std::string &path, const std::vector<ProbeTuple> &probes);

enum class ProbeSide { kSubject, kObject };

// Template filled with both fillers; `targets` are the pieces of the masked
// side, already replaced by [MASK] in `ids`.
struct ProbeInstance {
  std::string relation;
  ProbeSide side = ProbeSide::kObject;
  std::vector<int> ids;
  std::vector<int> positions;  // into ids
  std::vector<int> gold;       // original pieces
};

ProbeInstance make_probe_instance(const Vocabulary &vocab, const ProbeTuple &tuple,
                                  ProbeSide side);

// 1 + #{v : p_v > p_g} + #{v < g : p_v == p_g}.
int rank_of(const Matrix &log_probs, int row, int gold);

enum class MrrAggregate { kMean, kMin };
MrrAggregate parse_mrr_aggregate(const std::string &name);

// Reciprocal ranks of an instance's pieces combined by mean or min.
double instance_mrr(const std::vector<int> &ranks, MrrAggregate aggregate);

struct MrrReport {
  double total = 0.0;
  std::map<std::string, double> per_relation;
  std::map<std::string, int> instances_per_relation;
  int instances = 0;
};

// `sides` selects which filler gets masked; both by default. Instance MRRs
// are averaged per relation and over all instances.
MrrReport mrr_probe(const KnowledgeModel &model, const std::vector<ProbeTuple> &tuples,
                    MrrAggregate aggregate = MrrAggregate::kMean,
                    std::vector<ProbeSide> sides = {ProbeSide::kSubject,
                                                    ProbeSide::kObject});

// ---------------------------------------------------------------------------
// Entity linking.

struct ELPrediction {
  int start = 0;  // inclusive piece indices into the unframed sentence
  int end = 0;
  int entity = 0;
  double score = 0.0;
};

struct GoldLink {
  int start = 0;
  int end = 0;
  int entity = 0;
};

struct F1Report {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  int correct = 0;
  int predicted = 0;
  int gold = 0;
};

// Strong match, micro-averaged over all sentences. Precision is 0 when
// nothing is predicted.
F1Report el_f1(const std::vector<std::vector<ELPrediction>> &predictions,
               const std::vector<std::vector<GoldLink>> &gold);

// Argmax-psi candidate per span of slot `kb`; spans where NULL wins emit
// nothing.
std::vector<ELPrediction> predict_links(const KnowledgeModel &model, int kb,
                                        const std::vector<int> &ids);

// Gold links of a supervision example, NULL golds dropped.
std::vector<GoldLink> gold_links(const LinkExample &example, const KnowledgeBase &kb);

// ---------------------------------------------------------------------------
// Candidate-restricted (lemma/POS style) linking.

struct RestrictedInstance {
  std::vector<int> ids;
  int start = 0;
  int end = 0;
  int gold = 0;
  std::vector<int> allowed;
};

// JSONL {pieces, span: [s, e], gold, allowed: [ids]}.
std::vector<RestrictedInstance> load_restricted(const std::string &path,
                                                const Vocabulary &vocab);

struct RestrictedReport {
  double accuracy = 0.0;
  int correct = 0;
  int total = 0;
  int invalid = 0;  // gold outside the allowed subset
};

// Candidates outside `allowed` are removed from the span before scoring;
// spans the selector misses get the allowed entities with uniform priors.
RestrictedReport restricted_linking_accuracy(
    const KnowledgeModel &model, int kb,
    const std::vector<RestrictedInstance> &instances);

// ---------------------------------------------------------------------------
// Reports.

// {metric, value, ..., seed, config_hash} plus an aligned text table.
struct Report {
  nlohmann::json json;
  std::string text;
};

Report make_report(const std::string &metric, double value,
                   const nlohmann::json &extra, uint64_t seed,
                   const std::string &config_hash);

}  // namespace karlm

#endif  // KARLM_EVAL_H_
