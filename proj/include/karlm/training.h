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

// Staged training: masking, batch sampling, learning-rate schedule, AdamW,
// the linker-only stage, the multitask stage and checkpoints.

#ifndef KARLM_TRAINING_H_
#define KARLM_TRAINING_H_

#include <cstdint>
#include <functional>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "karlm/encoder.h"

namespace karlm {

// Stage ordering or configuration mistakes.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Data.

struct PairRecord {
  std::string sent_a;
  std::string sent_b;
  bool is_next = true;
};

// Spans are inclusive word-piece indices into `pieces`; gold holds entity
// ids (null_id for "no link").
struct SupervisionRecord {
  std::vector<std::string> pieces;
  std::vector<std::pair<int, int>> spans;
  std::vector<int> gold;
};

std::vector<PairRecord> load_corpus(const std::string &path);
void save_corpus(const std::string &path, const std::vector<PairRecord> &records);

// JSON null in `gold` maps to kb.null_id().
std::vector<SupervisionRecord> load_supervision(const std::string &path,
                                                const KnowledgeBase &kb);
void save_supervision(const std::string &path,
                      const std::vector<SupervisionRecord> &records,
                      const KnowledgeBase &kb);

// Tokenized training material. Supervised examples belong to one KB slot.
struct PairExample {
  std::vector<int> a;
  std::vector<int> b;
  bool is_next = true;
};

struct LinkExample {
  std::vector<int> ids;                     // unframed pieces
  std::vector<std::pair<int, int>> spans;   // into ids
  std::vector<int> gold;                    // entity ids
};

struct TrainingData {
  std::vector<PairExample> unlabeled;
  std::vector<std::vector<LinkExample>> supervised;  // per KB slot
  std::vector<std::vector<LinkExample>> validation;  // per KB slot
};

// Pairs longer than max_len after framing are truncated from the end of the
// longer side; the number truncated is returned through `truncated`.
PairExample tokenize_pair(const Vocabulary &vocab, const PairRecord &record,
                          int max_len, int *truncated = nullptr);

// Pieces missing from the vocabulary become [UNK].
LinkExample to_link_example(const Vocabulary &vocab,
                            const SupervisionRecord &record);

// Framed input plus, for slot `kb`, the index of each candidate span's gold
// entity in its candidate list. Candidate spans that match no gold span are
// supervised towards NULL; spans whose gold is not among the candidates get
// -1 (unsupervised).
struct FramedLink {
  EncoderInput input;
  std::vector<int> gold_index;
};
FramedLink frame_link_example(const KnowledgeModel &model, int kb,
                              const LinkExample &example);

// ---------------------------------------------------------------------------
// Masking.

struct MaskingConfig {
  double rate = 0.15;
  double mask = 0.8;
  double random = 0.1;
};

enum class Regime { kMask, kRandom, kKeep };

struct MaskedExample {
  EncoderInput input;                 // after token and candidate masking
  std::vector<MaskedTarget> targets;  // original pieces at selected positions
  std::vector<Regime> token_regime;   // parallel to targets
  // Per KB slot, (span index, regime) for every span overlapping a target.
  std::vector<std::vector<std::pair<int, Regime>>> span_regime;
  bool is_next = true;
};

// Selects round(rate * eligible) positions (at least one) among the
// non-reserved pieces; 80/10/10 mask/random/keep. Each candidate span that
// overlaps a selected position draws its own regime: MASK entity only,
// random real entities (same length, NULL kept) or unchanged. The random
// stream consumption does not depend on candidate identities.
MaskedExample mask_example(const KnowledgeModel &model, const EncoderInput &input,
                           bool is_next, const MaskingConfig &config, Rng &rng);

// ---------------------------------------------------------------------------
// Schedule and optimizer.

struct ScheduleConfig {
  double lr = 1e-3;
  double warmup = 0.1;  // fraction of total steps
  int total_steps = 1000;
  // kar, below, above apply to models with KB slots; base applies to every
  // parameter of a model without any.
  std::map<std::string, double> multipliers = {
      {"kar", 1.0}, {"below", 0.25}, {"above", 0.5}, {"base", 1.0}};
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-6;
  double weight_decay = 0.01;
  double clip_norm = 1.0;
  int batch_size = 8;
  double unlabeled_fraction = 0.8;
  // Early stopping; eval_every == 0 disables validation.
  int eval_every = 0;
  int patience = 5;
  double min_delta = 1e-4;
  int checkpoint_every = 0;
  int log_every = 1;
  int prefetch = 2;  // queue depth of the batch worker; 0 runs inline
  uint64_t seed = 1;

  void validate() const;
};

// Triangular schedule times the group multiplier. Throws
// std::invalid_argument for an unknown group and std::out_of_range for a
// step outside [0, total_steps].
double lr_at(int step, const std::string &group, const ScheduleConfig &schedule);

// kar / below / above relative to the KAR at slot `reference`, or base when
// the model has no slots.
std::string parameter_group(const KnowledgeModel &model, int param_index,
                            int reference);

class AdamW {
 public:
  AdamW() = default;
  AdamW(const ParameterSet &params, const ScheduleConfig &schedule);

  // Updates parameters whose mask bit is set with per-parameter rates.
  void step(ParameterSet &params, const Gradients &grads,
            const std::vector<double> &lr, const std::vector<bool> &mask);

  int steps() const { return t_; }
  std::vector<Matrix> &first_moment() { return m_; }
  std::vector<Matrix> &second_moment() { return v_; }
  const std::vector<Matrix> &first_moment() const { return m_; }
  const std::vector<Matrix> &second_moment() const { return v_; }
  void set_steps(int t) { t_ = t; }

 private:
  double beta1_ = 0.9, beta2_ = 0.999, epsilon_ = 1e-6, weight_decay_ = 0.01;
  std::vector<bool> decay_;
  std::vector<Matrix> m_, v_;
  int t_ = 0;
};

// Scales all masked gradients so their joint L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_gradients(Gradients &grads, const std::vector<bool> &mask,
                      double max_norm);

class EarlyStopping {
 public:
  EarlyStopping(double min_delta = 1e-4, int patience = 5)
      : min_delta_(min_delta), patience_(patience) {}

  // Returns true once `patience` consecutive evaluations failed to improve
  // the best value by more than min_delta.
  bool observe(double value);

  double best() const { return best_; }
  int bad_evals() const { return bad_; }
  void restore(double best, int bad) { best_ = best, bad_ = bad; }

 private:
  double min_delta_;
  int patience_;
  double best_ = 1e300;
  int bad_ = 0;
};

// ---------------------------------------------------------------------------
// Batches.

struct TrainingBatch {
  int step = 0;
  int source = -1;  // -1 unlabeled, otherwise the supervising KB slot
  std::vector<MaskedExample> examples;
  // Per example, per KB slot gold indices (empty when unsupervised).
  std::vector<std::vector<std::vector<int>>> gold;
};

// Deterministic function of (seed, stage tag, step): draws the source with
// probability unlabeled_fraction for unlabeled text (only among sources that
// exist), then batch_size examples with replacement. Supervised batches are
// never masked.
TrainingBatch make_batch(const KnowledgeModel &model, const TrainingData &data,
                         const ScheduleConfig &schedule,
                         const MaskingConfig &masking, const std::string &tag,
                         int step, bool linker_only, int kb);

// ---------------------------------------------------------------------------
// Training stages.

// Alignment before a KB joins full training: W2 <- pinv(W1), b2 <- 0.
void init_alignment(KarParams &params);

struct TrainState {
  std::string stage;  // "linker" or "full"
  int kb = -1;        // slot being added, -1 for a model without slots
  int step = 0;
  int total_steps = 0;
  bool done = false;
  double best = 1e300;
  int bad_evals = 0;
  // Bookkeeping across stages.
  std::vector<bool> linker_done;  // per slot
  int kbs_added = 0;              // slots whose full stage finished
};

struct StepReport {
  int step = 0;
  int source = -1;
  LossReport loss;
  std::map<std::string, double> lr;
  double grad_norm = 0.0;
};

struct StageOptions {
  std::ostream *log = nullptr;       // JSONL, one record per logged step
  std::string checkpoint_path;       // written every checkpoint_every steps
  int stop_after = -1;               // simulate interruption after this step
  std::function<void(const StepReport &)> on_step;
  nlohmann::json checkpoint_meta;    // embedded into checkpoints
};

struct StageResult {
  int steps_run = 0;
  bool early_stopped = false;
  bool skipped = false;
  std::string notice;
  double last_loss = 0.0;
  double validation = 0.0;
};

class Trainer {
 public:
  Trainer(KnowledgeModel &model, const TrainingData &data,
          ScheduleConfig schedule, MaskingConfig masking);

  // Linker stage for slot `kb`: only the projection, pooling, span block and
  // scorer train, on the slot's EL supervision. Skipped with a notice when
  // no supervision exists.
  StageResult pretrain_linker(int kb, const StageOptions &options = {});

  // Full stage for slot `kb` (or -1 for a model without KB slots). Requires
  // the linker stage first when the slot has supervision and all lower slots
  // to be added already; performs init_alignment before the first step.
  StageResult multitask_train(int kb, const StageOptions &options = {});

  // Continues an interrupted stage from `state`.
  StageResult resume(const StageOptions &options = {});

  TrainState &state() { return state_; }
  const TrainState &state() const { return state_; }
  AdamW &optimizer() { return optimizer_; }
  const AdamW &optimizer() const { return optimizer_; }
  const ScheduleConfig &schedule() const { return schedule_; }

  // Mean EL loss per supervised span over a slot's validation examples.
  double linker_validation_loss(int kb) const;
  // Held-out linking accuracy (argmax psi == gold over supervised spans).
  double linking_accuracy(int kb, const std::vector<LinkExample> &examples) const;

  // Loss of one batch; adds gradients scaled for the batch mean into grads.
  LossReport batch_gradients(const TrainingBatch &batch,
                             const std::vector<bool> &mask, Gradients &grads) const;

 private:
  StageResult run(const StageOptions &options);
  std::vector<bool> stage_mask() const;
  double validation_loss() const;

  KnowledgeModel &model_;
  const TrainingData &data_;
  ScheduleConfig schedule_;
  MaskingConfig masking_;
  TrainState state_;
  AdamW optimizer_;
};

// ---------------------------------------------------------------------------
// Checkpoints.

// Binary file: magic, JSON header (state, metadata, parameter shapes), then
// parameter values and optimizer moments as raw little-endian doubles.
void save_checkpoint(const std::string &path, const KnowledgeModel &model,
                     const Trainer *trainer, const nlohmann::json &meta);

struct LoadedCheckpoint {
  nlohmann::json meta;
  TrainState state;
  bool has_optimizer = false;
  int loaded = 0;   // parameters restored
  int missing = 0;  // model parameters absent from the file
};

// Restores parameters by name. With `partial` false every model parameter
// must be present with its shape. When a trainer is given its state and
// optimizer are restored too.
LoadedCheckpoint load_checkpoint(const std::string &path, KnowledgeModel &model,
                                 Trainer *trainer, bool partial = false);

}  // namespace karlm

#endif  // KARLM_TRAINING_H_
