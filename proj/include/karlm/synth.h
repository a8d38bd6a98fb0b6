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

// Synthetic datasets: a fact-recall benchmark whose held-out objects can only
// be recovered through the knowledge base, and a small entity-linking set
// whose gold entity is fixed by a context cue word and the priors.

#ifndef KARLM_SYNTH_H_
#define KARLM_SYNTH_H_

#include <string>
#include <vector>

#include "json.hpp"
#include "karlm/eval.h"
#include "karlm/kb.h"
#include "karlm/training.h"

namespace karlm {

struct SynthFactsConfig {
  uint64_t seed = 7;
  int relations = 20;
  int facts = 500;
  int objects = 50;
  double heldout = 0.2;  // fraction of facts never verbalized in the corpus
  int multiplicity = 4;  // corpus copies of each training fact
  int entity_dim = 16;
  double prior = 0.9;
  double two_piece = 0.2;  // fraction of subject names split into two pieces

  // Throws std::invalid_argument on inconsistent sizes.
  void validate() const;
};

// Subjects are entities 0..facts-1 with exactly one fact each; objects follow.
// A subject's embedding is its object's code vector, so the KB alone reveals
// the object of every fact.
struct SynthFacts {
  std::vector<std::string> vocab;
  std::vector<std::string> entity_names;
  Matrix embeddings;
  std::vector<DictionaryEntry> dictionary;
  std::vector<PairRecord> corpus;
  std::vector<PairRecord> heldout_sentences;  // one per held-out fact
  std::vector<ProbeTuple> probes;             // held-out facts
  std::vector<ProbeTuple> train_facts;
  std::vector<SupervisionRecord> supervision;
  nlohmann::json manifest;
};

SynthFacts synth_facts_benchmark(const SynthFactsConfig &config);

// dir/vocab.txt, dir/kb/{entities.jsonl,embeddings.txt,dictionary.jsonl},
// corpus.jsonl, heldout.jsonl, probes.jsonl, supervision.jsonl,
// manifest.json. Creates dir if needed.
void write_synth_facts(const std::string &dir, const SynthFacts &data);

struct SynthLinkingConfig {
  uint64_t seed = 11;
  int groups = 20;   // ambiguous mention words
  int senses = 3;    // entities per mention
  int train_per_entity = 20;
  int test_per_entity = 5;
  int fillers = 30;
  int entity_dim = 16;

  void validate() const;
};

struct SynthLinking {
  std::vector<std::string> vocab;
  std::vector<std::string> entity_names;
  Matrix embeddings;
  std::vector<DictionaryEntry> dictionary;
  std::vector<SupervisionRecord> train;
  std::vector<SupervisionRecord> test;
  // Unlabeled pairs for pretraining the encoder; the second sentence is the
  // next one when it mentions the same entity.
  std::vector<PairRecord> corpus;
};

SynthLinking synth_linking_set(const SynthLinkingConfig &config);

// dir/vocab.txt, dir/kb/..., train.jsonl, test.jsonl, corpus.jsonl,
// manifest.json.
void write_synth_linking(const std::string &dir, const SynthLinkingConfig &config,
                         const SynthLinking &data);

// KB files in the formats KnowledgeBase::load reads.
void write_kb_files(const std::string &dir, const std::vector<std::string> &names,
                    const Matrix &embeddings,
                    const std::vector<DictionaryEntry> &dictionary);

}  // namespace karlm

#endif  // KARLM_SYNTH_H_
