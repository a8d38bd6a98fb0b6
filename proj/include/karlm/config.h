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

// Run configuration: one JSON file plus key=value overrides.

#ifndef KARLM_CONFIG_H_
#define KARLM_CONFIG_H_

#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "karlm/encoder.h"
#include "karlm/synth.h"
#include "karlm/training.h"

namespace karlm {

struct KbConfig {
  std::string name;
  int layer = 3;
  std::string entities;
  std::string embeddings;
  std::string dictionary;
  std::string lemmas;
  std::string supervision;
  double validation_fraction = 0.1;
  KarConfig kar;
  SelectorConfig selector;
};

struct EvalConfig {
  std::string corpus;   // perplexity sentences
  std::string probes;   // fact-recall tuples
  std::string el_gold;  // supervision-format gold links
  std::string wsd;      // restricted-linking instances
  std::string kb;       // KB used by el / wsd; first KB when empty
  std::string mrr_aggregate = "mean";
  std::string mrr_sides = "both";  // both | subject | object
};

struct RunConfig {
  uint64_t seed = 1;
  std::string vocab;
  std::string corpus;
  std::string output_dir = "run";
  std::string init_from;  // checkpoint loaded by name before training
  EncoderConfig encoder;
  std::vector<KbConfig> kbs;
  ScheduleConfig linker;
  ScheduleConfig train;
  MaskingConfig masking;
  EvalConfig eval;
  SynthFactsConfig synth;

  // Canonical JSON of every setting, paths as resolved.
  nlohmann::json to_json() const;
  // FNV-1a of the canonical dump, 16 hex digits.
  std::string hash() const;
};

// Defaults as JSON; every accepted key appears here.
nlohmann::json default_config_json();

// Merges `overrides` ("a.b.c=value", value parsed as JSON when possible,
// "kbs.0.layer=2" for list elements) over the file over the defaults.
// Relative paths in the file resolve against the file's directory, those in
// overrides against the working directory. Unknown keys are errors.
RunConfig load_run_config(const std::string &path,
                          const std::vector<std::string> &overrides = {});
RunConfig run_config_from_json(const nlohmann::json &j,
                               const std::string &base_dir = "");

// Throws ConfigError unless every file the command needs exists.
void check_paths(const RunConfig &config, bool need_corpus, bool need_kbs);

// Everything a command needs, loaded from a RunConfig.
struct RunContext {
  std::shared_ptr<const Vocabulary> vocab;
  std::vector<KbSpec> kbs;
  std::unique_ptr<KnowledgeModel> model;
  TrainingData data;
  int truncated_pairs = 0;
};

// Loads vocabulary and KBs and builds the model; corpus and supervision are
// read when `with_data` is set.
RunContext load_context(const RunConfig &config, bool with_data);

}  // namespace karlm

#endif  // KARLM_CONFIG_H_
