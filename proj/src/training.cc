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

#include "karlm/training.h"

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include "karlm/linalg.h"

namespace karlm {

using nlohmann::json;

namespace {

std::string location(const std::string &path, int line) {
  return path + ":" + std::to_string(line) + ": ";
}

template <typename Fn>
void for_each_json_line(const std::string &path, Fn fn) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::exception &e) {
      throw ConfigError(location(path, number) + "malformed JSON: " + e.what());
    }
    try {
      fn(record, number);
    } catch (const json::exception &e) {
      throw ConfigError(location(path, number) + e.what());
    }
  }
}

}  // namespace

std::vector<PairRecord> load_corpus(const std::string &path) {
  std::vector<PairRecord> out;
  for_each_json_line(path, [&](const json &r, int line) {
    if (!r.contains("sent_a") || !r.contains("sent_b")) {
      throw ConfigError(location(path, line) + "record needs sent_a and sent_b");
    }
    PairRecord p;
    p.sent_a = r.at("sent_a").get<std::string>();
    p.sent_b = r.at("sent_b").get<std::string>();
    p.is_next = r.value("is_next", true);
    out.push_back(std::move(p));
  });
  return out;
}

void save_corpus(const std::string &path, const std::vector<PairRecord> &records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const PairRecord &r : records) {
    out << json{{"sent_a", r.sent_a}, {"sent_b", r.sent_b}, {"is_next", r.is_next}}
               .dump()
        << "\n";
  }
}

std::vector<SupervisionRecord> load_supervision(const std::string &path,
                                                const KnowledgeBase &kb) {
  std::vector<SupervisionRecord> out;
  for_each_json_line(path, [&](const json &r, int line) {
    SupervisionRecord s;
    s.pieces = r.at("pieces").get<std::vector<std::string>>();
    for (const json &span : r.at("spans")) {
      s.spans.emplace_back(span.at(0).get<int>(), span.at(1).get<int>());
    }
    for (const json &g : r.at("gold")) {
      s.gold.push_back(g.is_null() ? kb.null_id() : g.get<int>());
    }
    if (s.spans.size() != s.gold.size()) {
      throw ConfigError(location(path, line) + "spans and gold differ in length");
    }
    const int n = static_cast<int>(s.pieces.size());
    for (size_t i = 0; i < s.spans.size(); ++i) {
      auto [a, b] = s.spans[i];
      if (a < 0 || a > b || b >= n) {
        throw ConfigError(location(path, line) + "span [" + std::to_string(a) +
                          ", " + std::to_string(b) + "] outside " +
                          std::to_string(n) + " pieces");
      }
      if (s.gold[i] < 0 || s.gold[i] > kb.null_id()) {
        throw ConfigError(location(path, line) + "unknown gold entity " +
                          std::to_string(s.gold[i]));
      }
    }
    out.push_back(std::move(s));
  });
  return out;
}

void save_supervision(const std::string &path,
                      const std::vector<SupervisionRecord> &records,
                      const KnowledgeBase &kb) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const SupervisionRecord &r : records) {
    json spans = json::array(), gold = json::array();
    for (auto [a, b] : r.spans) spans.push_back({a, b});
    for (int g : r.gold) {
      if (g == kb.null_id()) {
        gold.push_back(nullptr);
      } else {
        gold.push_back(g);
      }
    }
    out << json{{"pieces", r.pieces}, {"spans", spans}, {"gold", gold}}.dump()
        << "\n";
  }
}

PairExample tokenize_pair(const Vocabulary &vocab, const PairRecord &record,
                          int max_len, int *truncated) {
  PairExample ex;
  ex.a = tokenize(record.sent_a, vocab);
  ex.b = tokenize(record.sent_b, vocab);
  ex.is_next = record.is_next;
  int cut = 0;
  const int frame = ex.b.empty() ? 2 : 3;
  while (static_cast<int>(ex.a.size() + ex.b.size()) + frame > max_len) {
    std::vector<int> &longer = ex.a.size() >= ex.b.size() ? ex.a : ex.b;
    longer.pop_back();
    ++cut;
  }
  if (truncated != nullptr) *truncated = cut;
  return ex;
}

LinkExample to_link_example(const Vocabulary &vocab,
                            const SupervisionRecord &record) {
  LinkExample ex;
  for (const std::string &p : record.pieces) {
    const int id = vocab.id(p);
    ex.ids.push_back(id < 0 ? vocab.unk() : id);
  }
  ex.spans = record.spans;
  ex.gold = record.gold;
  return ex;
}

FramedLink frame_link_example(const KnowledgeModel &model, int kb,
                              const LinkExample &example) {
  FramedLink out;
  out.input = frame_pair(model, example.ids, {});
  const KnowledgeBase &base = *model.slot(kb).kb;
  const CandidateList &list = out.input.candidates[kb];
  for (const CandidateSpan &span : list.spans) {
    int gold_entity = base.null_id();
    for (size_t g = 0; g < example.spans.size(); ++g) {
      if (example.spans[g].first + 1 == span.start &&
          example.spans[g].second + 1 == span.end) {
        gold_entity = example.gold[g];
        break;
      }
    }
    int index = -1;
    for (size_t k = 0; k < span.candidates.size(); ++k) {
      if (span.candidates[k].entity == gold_entity) {
        index = static_cast<int>(k);
        break;
      }
    }
    out.gold_index.push_back(index);
  }
  return out;
}

MaskedExample mask_example(const KnowledgeModel &model, const EncoderInput &input,
                           bool is_next, const MaskingConfig &config, Rng &rng) {
  const Vocabulary &vocab = model.vocab();
  MaskedExample out;
  out.input = input;
  out.is_next = is_next;
  out.span_regime.resize(input.candidates.size());

  std::vector<int> eligible;
  for (int i = 0; i < static_cast<int>(input.ids.size()); ++i) {
    if (!vocab.is_reserved(input.ids[i])) eligible.push_back(i);
  }
  if (eligible.empty()) return out;
  const int count = std::max<int>(
      1, static_cast<int>(std::lround(config.rate * eligible.size())));
  for (int i = 0; i < count; ++i) {
    const int j = i + static_cast<int>(uniform_index(rng, eligible.size() - i));
    std::swap(eligible[i], eligible[j]);
  }
  std::vector<int> selected(eligible.begin(), eligible.begin() + count);
  std::sort(selected.begin(), selected.end());

  // Replacement pieces come from the non-reserved part of the vocabulary.
  static thread_local std::vector<int> ordinary;
  static thread_local const Vocabulary *ordinary_for = nullptr;
  if (ordinary_for != &vocab) {
    ordinary.clear();
    for (int id = 0; id < vocab.size(); ++id) {
      if (!vocab.is_reserved(id)) ordinary.push_back(id);
    }
    ordinary_for = &vocab;
  }

  auto draw_regime = [&]() {
    const double u = uniform01(rng);
    if (u < config.mask) return Regime::kMask;
    if (u < config.mask + config.random) return Regime::kRandom;
    return Regime::kKeep;
  };

  for (int pos : selected) {
    out.targets.push_back({pos, input.ids[pos]});
    const Regime regime = draw_regime();
    out.token_regime.push_back(regime);
    if (regime == Regime::kMask) {
      out.input.ids[pos] = vocab.mask();
    } else if (regime == Regime::kRandom) {
      out.input.ids[pos] = ordinary[uniform_index(rng, ordinary.size())];
    }
  }

  for (size_t j = 0; j < input.candidates.size(); ++j) {
    const KnowledgeBase &kb = *model.slot(static_cast<int>(j)).kb;
    const double mask_prior = model.slot(static_cast<int>(j)).config.mask_prior;
    std::vector<CandidateSpan> &spans = out.input.candidates[j].spans;
    for (size_t m = 0; m < spans.size(); ++m) {
      CandidateSpan &span = spans[m];
      const bool overlaps = std::any_of(
          selected.begin(), selected.end(),
          [&](int p) { return p >= span.start && p <= span.end; });
      if (!overlaps) continue;
      const Regime regime = draw_regime();
      const uint64_t span_seed = rng();
      out.span_regime[j].emplace_back(static_cast<int>(m), regime);
      if (regime == Regime::kMask) {
        span.candidates = {Candidate{kb.mask_id(), mask_prior}};
      } else if (regime == Regime::kRandom) {
        Rng local(span_seed);
        for (Candidate &c : span.candidates) {
          if (c.entity == kb.null_id()) continue;
          c.entity = static_cast<int>(uniform_index(local, kb.entity_count()));
        }
      }
    }
  }
  return out;
}

void ScheduleConfig::validate() const {
  auto fail = [](const std::string &msg) { throw ConfigError("schedule: " + msg); };
  if (!(lr > 0)) fail("lr must be positive");
  if (warmup < 0 || warmup > 1) fail("warmup must be a fraction in [0, 1]");
  if (total_steps <= 0) fail("total_steps must be positive");
  for (const auto &[group, m] : multipliers) {
    if (!(m > 0)) fail("multiplier for " + group + " must be positive");
  }
  for (const char *group : {"kar", "below", "above", "base"}) {
    if (!multipliers.count(group)) fail(std::string("missing multiplier ") + group);
  }
  if (batch_size <= 0) fail("batch_size must be positive");
  if (unlabeled_fraction < 0 || unlabeled_fraction > 1) {
    fail("unlabeled_fraction must be in [0, 1]");
  }
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) fail("betas in [0, 1)");
  if (patience <= 0) fail("patience must be positive");
}

double lr_at(int step, const std::string &group, const ScheduleConfig &schedule) {
  auto it = schedule.multipliers.find(group);
  if (it == schedule.multipliers.end()) {
    throw std::invalid_argument("unknown parameter group '" + group + "'");
  }
  const int total = schedule.total_steps;
  if (step < 0 || step > total) {
    throw std::out_of_range("step " + std::to_string(step) + " outside 0.." +
                            std::to_string(total));
  }
  const double warm = schedule.warmup * total;
  double fraction;
  if (step < warm) {
    fraction = step / warm;
  } else if (total > warm) {
    fraction = (total - step) / (total - warm);
  } else {
    fraction = 1.0;
  }
  return schedule.lr * it->second * fraction;
}

std::string parameter_group(const KnowledgeModel &model, int param_index,
                            int reference) {
  const ParamRole &role = model.role(param_index);
  if (role.kind == ParamRole::Kind::kKar) return "kar";
  if (reference < 0 || model.kb_count() == 0) return "base";
  switch (role.kind) {
    case ParamRole::Kind::kEmbedding:
      return "below";
    case ParamRole::Kind::kBlock:
      return role.layer <= model.slot(reference).layer ? "below" : "above";
    default:
      return "above";
  }
}

namespace {

bool ends_with(const std::string &s, std::string_view suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

AdamW::AdamW(const ParameterSet &params, const ScheduleConfig &schedule)
    : beta1_(schedule.beta1),
      beta2_(schedule.beta2),
      epsilon_(schedule.epsilon),
      weight_decay_(schedule.weight_decay) {
  for (int i = 0; i < params.size(); ++i) {
    const Parameter &p = params.at(i);
    // Biases and layer-norm gains are exempt from decay.
    decay_.push_back(!ends_with(p.name, ".bias") && !ends_with(p.name, ".gain"));
    m_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  }
}

void AdamW::step(ParameterSet &params, const Gradients &grads,
                 const std::vector<double> &lr, const std::vector<bool> &mask) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, t_);
  const double c2 = 1.0 - std::pow(beta2_, t_);
  for (int i = 0; i < params.size(); ++i) {
    if (!mask[i]) continue;
    Parameter &p = params.at(i);
    const Matrix &g = grads[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    if (lr[i] == 0.0) continue;
    auto update = (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + epsilon_);
    if (decay_[i]) {
      p.value.array() -= lr[i] * (update + weight_decay_ * p.value.array());
    } else {
      p.value.array() -= lr[i] * update;
    }
  }
}

double clip_gradients(Gradients &grads, const std::vector<bool> &mask,
                      double max_norm) {
  double sq = 0.0;
  for (int i = 0; i < grads.size(); ++i) {
    if (mask[i]) sq += grads[i].squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (int i = 0; i < grads.size(); ++i) {
      if (mask[i]) grads[i] *= s;
    }
  }
  return norm;
}

bool EarlyStopping::observe(double value) {
  if (value < best_ - min_delta_) {
    best_ = value;
    bad_ = 0;
    return false;
  }
  if (value < best_) best_ = value;
  return ++bad_ >= patience_;
}

TrainingBatch make_batch(const KnowledgeModel &model, const TrainingData &data,
                         const ScheduleConfig &schedule,
                         const MaskingConfig &masking, const std::string &tag,
                         int step, bool linker_only, int kb) {
  TrainingBatch batch;
  batch.step = step;

  std::vector<int> labeled;
  if (linker_only) {
    labeled.push_back(kb);
  } else {
    for (int j = 0; j <= kb; ++j) {
      if (j < static_cast<int>(data.supervised.size()) && !data.supervised[j].empty()) {
        labeled.push_back(j);
      }
    }
  }
  const bool has_text = !linker_only && !data.unlabeled.empty();
  if (!has_text && labeled.empty()) {
    throw ConfigError("no training data for stage " + tag);
  }
  Rng source_rng = substream(schedule.seed, "source." + tag, step);
  const double u = uniform01(source_rng);
  if (has_text && (labeled.empty() || u < schedule.unlabeled_fraction)) {
    batch.source = -1;
  } else {
    batch.source = labeled[uniform_index(source_rng, labeled.size())];
  }

  Rng pick = substream(schedule.seed, "pick." + tag, step);
  for (int b = 0; b < schedule.batch_size; ++b) {
    std::vector<std::vector<int>> gold(model.kb_count());
    if (batch.source < 0) {
      const PairExample &ex = data.unlabeled[uniform_index(pick, data.unlabeled.size())];
      EncoderInput input = frame_pair(model, ex.a, ex.b);
      Rng mask_rng = substream(schedule.seed, "mask." + tag, step, b);
      batch.examples.push_back(mask_example(model, input, ex.is_next, masking, mask_rng));
    } else {
      const std::vector<LinkExample> &pool = data.supervised[batch.source];
      const LinkExample &ex = pool[uniform_index(pick, pool.size())];
      FramedLink framed = frame_link_example(model, batch.source, ex);
      MaskedExample me;
      me.input = std::move(framed.input);
      me.span_regime.resize(model.kb_count());
      gold[batch.source] = std::move(framed.gold_index);
      batch.examples.push_back(std::move(me));
    }
    batch.gold.push_back(std::move(gold));
  }
  return batch;
}

void init_alignment(KarParams &params) {
  params.up.weight->value = pseudoinverse(params.down.weight->value);
  params.up.bias->value.setZero();
}

namespace {

// Runs make_batch for consecutive steps on a worker thread, a bounded number
// of batches ahead of the trainer. Batch contents depend only on the step, so
// timing never affects results.
class BatchQueue {
 public:
  BatchQueue(std::function<TrainingBatch(int)> make, int first, int last,
             int depth)
      : make_(std::move(make)), next_(first), last_(last), depth_(depth) {
    if (depth_ > 0) worker_ = std::thread([this] { produce(); });
  }

  ~BatchQueue() {
    {
      std::lock_guard<std::mutex> lock(mu_);
      stop_ = true;
    }
    cv_.notify_all();
    if (worker_.joinable()) worker_.join();
  }

  TrainingBatch pop() {
    if (depth_ <= 0) return make_(next_++);
    std::unique_lock<std::mutex> lock(mu_);
    cv_.wait(lock, [this] { return !queue_.empty() || error_; });
    if (queue_.empty()) std::rethrow_exception(error_);
    TrainingBatch batch = std::move(queue_.front());
    queue_.pop_front();
    cv_.notify_all();
    return batch;
  }

 private:
  void produce() {
    try {
      for (int step = next_; step < last_; ++step) {
        TrainingBatch batch = make_(step);
        std::unique_lock<std::mutex> lock(mu_);
        cv_.wait(lock, [this] {
          return stop_ || static_cast<int>(queue_.size()) < depth_;
        });
        if (stop_) return;
        queue_.push_back(std::move(batch));
        cv_.notify_all();
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(mu_);
      error_ = std::current_exception();
      cv_.notify_all();
    }
  }

  std::function<TrainingBatch(int)> make_;
  int next_, last_, depth_;
  std::thread worker_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<TrainingBatch> queue_;
  std::exception_ptr error_;
  bool stop_ = false;
};

json loss_json(const LossReport &r) {
  return json{{"mlm", r.mlm}, {"nsp", r.nsp}, {"el", r.el}, {"total", r.total}};
}

}  // namespace

Trainer::Trainer(KnowledgeModel &model, const TrainingData &data,
                 ScheduleConfig schedule, MaskingConfig masking)
    : model_(model),
      data_(data),
      schedule_(std::move(schedule)),
      masking_(masking),
      optimizer_(model.params(), schedule_) {
  schedule_.validate();
  state_.linker_done.assign(model.kb_count(), false);
}

std::vector<bool> Trainer::stage_mask() const {
  const ParameterSet &params = model_.params();
  std::vector<bool> mask(params.size(), false);
  if (state_.stage == "linker") {
    for (int i : model_.slot(state_.kb).params.linker_indices()) {
      mask[i] = params.at(i).trainable;
    }
    return mask;
  }
  for (int i = 0; i < params.size(); ++i) {
    const ParamRole &role = model_.role(i);
    const bool inactive = role.kind == ParamRole::Kind::kKar && role.kb > state_.kb;
    mask[i] = params.at(i).trainable && !inactive;
  }
  return mask;
}

LossReport Trainer::batch_gradients(const TrainingBatch &batch,
                                    const std::vector<bool> &mask,
                                    Gradients &grads) const {
  LossReport report;
  report.el.assign(model_.kb_count(), 0.0);
  const double count = static_cast<double>(batch.examples.size());
  if (batch.source < 0) {
    for (const MaskedExample &ex : batch.examples) {
      Tape tape;
      tape.set_trainable_mask(mask);
      EncoderState state = encode(tape, model_, ex.input);
      Tensor2 mlm = mlm_loss(tape, model_, state, ex.targets);
      Tensor2 nsp = nsp_loss(tape, model_, state, ex.is_next);
      report.mlm += mlm.value()(0, 0) / count;
      report.nsp += nsp.value()(0, 0) / count;
      tape.backward(scale(add(mlm, nsp), 1.0 / count), grads);
    }
  } else {
    const int j = batch.source;
    int supervised = 0;
    for (const auto &gold : batch.gold) {
      supervised += static_cast<int>(
          std::count_if(gold[j].begin(), gold[j].end(), [](int g) { return g >= 0; }));
    }
    if (supervised > 0) {
      for (size_t b = 0; b < batch.examples.size(); ++b) {
        Tape tape;
        tape.set_trainable_mask(mask);
        LinkSupervision sup(model_.kb_count(), nullptr);
        sup[j] = &batch.gold[b][j];
        EncoderState state = encode(tape, model_, batch.examples[b].input, &sup,
                                    model_.slot(j).layer);
        const std::optional<KarOutput> &kar = state.kar[j];
        if (!kar || !kar->link_loss) continue;
        report.el[j] += kar->link_loss->value()(0, 0) / supervised;
        tape.backward(scale(*kar->link_loss, 1.0 / supervised), grads);
      }
    }
  }
  report.finalize();
  return report;
}

double Trainer::linker_validation_loss(int kb) const {
  const std::vector<LinkExample> &pool =
      kb < static_cast<int>(data_.validation.size()) ? data_.validation[kb]
                                                     : std::vector<LinkExample>{};
  double total = 0.0;
  int spans = 0;
  for (const LinkExample &ex : pool) {
    FramedLink framed = frame_link_example(model_, kb, ex);
    Tape tape;
    LinkSupervision sup(model_.kb_count(), nullptr);
    sup[kb] = &framed.gold_index;
    EncoderState state = encode(tape, model_, framed.input, &sup, model_.slot(kb).layer);
    const std::optional<KarOutput> &kar = state.kar[kb];
    if (!kar || !kar->link_loss) continue;
    total += kar->link_loss->value()(0, 0);
    spans += kar->supervised_spans;
  }
  return spans > 0 ? total / spans : 0.0;
}

double Trainer::linking_accuracy(int kb, const std::vector<LinkExample> &examples) const {
  int correct = 0, total = 0;
  for (const LinkExample &ex : examples) {
    FramedLink framed = frame_link_example(model_, kb, ex);
    Tape tape;
    EncoderState state = encode(tape, model_, framed.input, nullptr, model_.slot(kb).layer);
    const std::optional<KarOutput> &kar = state.kar[kb];
    for (size_t m = 0; m < framed.gold_index.size(); ++m) {
      if (framed.gold_index[m] < 0) continue;
      ++total;
      const Matrix &psi = kar->activations.psi[m].value();
      Eigen::Index best;
      psi.col(0).maxCoeff(&best);
      if (best == framed.gold_index[m]) ++correct;
    }
  }
  return total > 0 ? static_cast<double>(correct) / total : 0.0;
}

double Trainer::validation_loss() const {
  if (state_.stage == "linker") return linker_validation_loss(state_.kb);
  const int n = std::min<int>(64, static_cast<int>(data_.unlabeled.size()));
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const PairExample &ex = data_.unlabeled[i];
    Rng rng = substream(schedule_.seed, "valid", i);
    MaskedExample me =
        mask_example(model_, frame_pair(model_, ex.a, ex.b), ex.is_next, masking_, rng);
    Tape tape;
    EncoderState state = encode(tape, model_, me.input);
    total += mlm_loss(tape, model_, state, me.targets).value()(0, 0) +
             nsp_loss(tape, model_, state, me.is_next).value()(0, 0);
  }
  return n > 0 ? total / n : 0.0;
}

StageResult Trainer::pretrain_linker(int kb, const StageOptions &options) {
  if (kb < 0 || kb >= model_.kb_count()) {
    throw ConfigError("linker stage needs a KB slot, got " + std::to_string(kb));
  }
  if (state_.kbs_added != kb) {
    throw ConfigError("KBs are added bottom to top: slot " + std::to_string(kb) +
                      " requested while " + std::to_string(state_.kbs_added) +
                      " slots are trained");
  }
  StageResult result;
  if (kb >= static_cast<int>(data_.supervised.size()) || data_.supervised[kb].empty()) {
    result.skipped = true;
    result.notice = "no entity linking supervision for KB '" +
                    model_.slot(kb).kb->name() + "'; linker stage skipped";
    return result;
  }
  state_.stage = "linker";
  state_.kb = kb;
  state_.step = 0;
  state_.total_steps = schedule_.total_steps;
  state_.done = false;
  state_.best = 1e300;
  state_.bad_evals = 0;
  optimizer_ = AdamW(model_.params(), schedule_);
  return run(options);
}

StageResult Trainer::multitask_train(int kb, const StageOptions &options) {
  if (kb < -1 || kb >= model_.kb_count()) {
    throw ConfigError("no KB slot " + std::to_string(kb));
  }
  if (kb >= 0) {
    if (kb > state_.kbs_added || kb < state_.kbs_added - 1) {
      throw ConfigError("KBs are added bottom to top: slot " + std::to_string(kb) +
                        " requested while " + std::to_string(state_.kbs_added) +
                        " slots are trained");
    }
    const bool supervised =
        kb < static_cast<int>(data_.supervised.size()) && !data_.supervised[kb].empty();
    if (supervised && !state_.linker_done[kb]) {
      throw ConfigError("KB '" + model_.slot(kb).kb->name() +
                        "' has linking supervision; run the linker stage first");
    }
    if (kb == state_.kbs_added) init_alignment(model_.slot(kb).params);
  }
  state_.stage = "full";
  state_.kb = kb;
  state_.step = 0;
  state_.total_steps = schedule_.total_steps;
  state_.done = false;
  state_.best = 1e300;
  state_.bad_evals = 0;
  optimizer_ = AdamW(model_.params(), schedule_);
  return run(options);
}

StageResult Trainer::resume(const StageOptions &options) {
  if (state_.stage.empty()) throw ConfigError("nothing to resume");
  if (state_.done) {
    StageResult r;
    r.skipped = true;
    r.notice = state_.stage + " stage already complete";
    return r;
  }
  return run(options);
}

StageResult Trainer::run(const StageOptions &options) {
  const bool linker = state_.stage == "linker";
  const int kb = state_.kb;
  model_.set_active_kbs(kb + 1);
  const std::vector<bool> mask = stage_mask();
  const std::string tag = state_.stage + "." + std::to_string(kb);

  std::vector<std::string> groups(model_.params().size());
  std::vector<std::string> group_names;
  for (int i = 0; i < model_.params().size(); ++i) {
    groups[i] = parameter_group(model_, i, kb);
    if (mask[i] && std::find(group_names.begin(), group_names.end(), groups[i]) ==
                       group_names.end()) {
      group_names.push_back(groups[i]);
    }
  }
  std::sort(group_names.begin(), group_names.end());

  EarlyStopping stopper(schedule_.min_delta, schedule_.patience);
  stopper.restore(state_.best, state_.bad_evals);

  const KnowledgeModel &model = model_;
  const TrainingData &data = data_;
  const ScheduleConfig schedule = schedule_;
  const MaskingConfig masking = masking_;
  BatchQueue queue(
      [&model, &data, schedule, masking, tag, linker, kb](int step) {
        return make_batch(model, data, schedule, masking, tag, step, linker, kb);
      },
      state_.step, state_.total_steps, schedule_.prefetch);

  StageResult result;
  Gradients grads(model_.params());
  std::vector<double> lr(model_.params().size());
  while (state_.step < state_.total_steps) {
    TrainingBatch batch = queue.pop();
    grads.zero();
    StepReport report;
    report.step = state_.step;
    report.source = batch.source;
    report.loss = batch_gradients(batch, mask, grads);
    report.grad_norm = clip_gradients(grads, mask, schedule_.clip_norm);
    for (const std::string &g : group_names) {
      report.lr[g] = lr_at(state_.step, g, schedule_);
    }
    for (int i = 0; i < model_.params().size(); ++i) {
      lr[i] = mask[i] ? report.lr[groups[i]] : 0.0;
    }
    optimizer_.step(model_.params(), grads, lr, mask);
    ++state_.step;
    ++result.steps_run;
    result.last_loss = report.loss.total;

    bool stop = false;
    bool evaluated = false;
    if (schedule_.eval_every > 0 && state_.step % schedule_.eval_every == 0) {
      result.validation = validation_loss();
      stop = stopper.observe(result.validation);
      state_.best = stopper.best();
      state_.bad_evals = stopper.bad_evals();
      evaluated = true;
    }
    // One record per step, so steps in a stage log increase strictly.
    if (options.log != nullptr && schedule_.log_every > 0 &&
        (report.step % schedule_.log_every == 0 || evaluated ||
         state_.step == state_.total_steps)) {
      json record = {{"step", report.step},
                     {"stage", state_.stage},
                     {"kb", kb},
                     {"source", report.source},
                     {"loss", loss_json(report.loss)},
                     {"lr", report.lr},
                     {"grad_norm", report.grad_norm}};
      if (evaluated) record["validation"] = result.validation;
      *options.log << record.dump() << "\n";
    }
    if (options.on_step) options.on_step(report);
    if (stop) {
      result.early_stopped = true;
      break;
    }
    if (!options.checkpoint_path.empty() && schedule_.checkpoint_every > 0 &&
        state_.step % schedule_.checkpoint_every == 0 &&
        state_.step < state_.total_steps) {
      save_checkpoint(options.checkpoint_path, model_, this, options.checkpoint_meta);
    }
    if (options.stop_after >= 0 && state_.step >= options.stop_after) {
      if (!options.checkpoint_path.empty()) {
        save_checkpoint(options.checkpoint_path, model_, this, options.checkpoint_meta);
      }
      return result;
    }
  }

  state_.done = true;
  if (linker) {
    state_.linker_done[kb] = true;
  } else if (kb >= 0) {
    state_.kbs_added = std::max(state_.kbs_added, kb + 1);
  }
  if (!options.checkpoint_path.empty()) {
    save_checkpoint(options.checkpoint_path, model_, this, options.checkpoint_meta);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints.

namespace {

constexpr char kMagic[8] = {'K', 'A', 'R', 'L', 'M', 'C', 'K', '1'};

json state_json(const TrainState &s) {
  return json{{"stage", s.stage},         {"kb", s.kb},
              {"step", s.step},           {"total_steps", s.total_steps},
              {"done", s.done},           {"best", s.best},
              {"bad_evals", s.bad_evals}, {"linker_done", s.linker_done},
              {"kbs_added", s.kbs_added}};
}

TrainState state_from_json(const json &j) {
  TrainState s;
  s.stage = j.at("stage").get<std::string>();
  s.kb = j.at("kb").get<int>();
  s.step = j.at("step").get<int>();
  s.total_steps = j.at("total_steps").get<int>();
  s.done = j.at("done").get<bool>();
  s.best = j.at("best").get<double>();
  s.bad_evals = j.at("bad_evals").get<int>();
  s.linker_done = j.at("linker_done").get<std::vector<bool>>();
  s.kbs_added = j.at("kbs_added").get<int>();
  return s;
}

void write_matrix(std::ostream &out, const Matrix &m) {
  out.write(reinterpret_cast<const char *>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
}

void read_matrix(std::istream &in, Matrix &m, const std::string &path) {
  in.read(reinterpret_cast<char *>(m.data()),
          static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!in) throw ConfigError(path + ": truncated checkpoint");
}

}  // namespace

void save_checkpoint(const std::string &path, const KnowledgeModel &model,
                     const Trainer *trainer, const json &meta) {
  const ParameterSet &params = model.params();
  json header;
  header["meta"] = meta;
  header["checksum"] = params.checksum();
  header["state"] = trainer != nullptr ? state_json(trainer->state()) : json();
  header["optimizer_steps"] =
      trainer != nullptr ? json(trainer->optimizer().steps())
                         : json();
  json shapes = json::array();
  for (int i = 0; i < params.size(); ++i) {
    const Parameter &p = params.at(i);
    shapes.push_back({p.name, p.value.rows(), p.value.cols()});
  }
  header["params"] = shapes;
  const std::string text = header.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out.write(kMagic, sizeof(kMagic));
    const uint64_t length = text.size();
    out.write(reinterpret_cast<const char *>(&length), sizeof(length));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (int i = 0; i < params.size(); ++i) write_matrix(out, params.at(i).value);
    if (trainer != nullptr) {
      const AdamW &opt = trainer->optimizer();
      for (const Matrix &m : opt.first_moment()) write_matrix(out, m);
      for (const Matrix &v : opt.second_moment()) write_matrix(out, v);
    }
    if (!out) throw std::runtime_error("failed writing " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw std::runtime_error("cannot move checkpoint into " + path);
  }
}

LoadedCheckpoint load_checkpoint(const std::string &path, KnowledgeModel &model,
                                 Trainer *trainer, bool partial) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ConfigError(path + ": not a checkpoint");
  }
  uint64_t length = 0;
  in.read(reinterpret_cast<char *>(&length), sizeof(length));
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw ConfigError(path + ": truncated header");
  const json header = json::parse(text);

  LoadedCheckpoint out;
  out.meta = header.value("meta", json::object());
  ParameterSet &params = model.params();

  // Read every stored matrix, then assign by name.
  struct Stored {
    std::string name;
    Matrix value;
  };
  std::vector<Stored> stored;
  for (const json &entry : header.at("params")) {
    Stored s{entry.at(0).get<std::string>(),
             Matrix(entry.at(1).get<int>(), entry.at(2).get<int>())};
    read_matrix(in, s.value, path);
    stored.push_back(std::move(s));
  }
  std::vector<int> slot_of(params.size(), -1);
  for (size_t k = 0; k < stored.size(); ++k) {
    Parameter *p = params.find(stored[k].name);
    if (p == nullptr) {
      if (!partial) {
        throw ConfigError(path + ": parameter " + stored[k].name +
                          " does not exist in this model");
      }
      continue;
    }
    if (p->value.rows() != stored[k].value.rows() ||
        p->value.cols() != stored[k].value.cols()) {
      throw ConfigError(path + ": parameter " + p->name + " has shape " +
                        shape_string(stored[k].value) + ", model expects " +
                        shape_string(p->value));
    }
    slot_of[p->index] = static_cast<int>(k);
  }
  for (int i = 0; i < params.size(); ++i) {
    if (slot_of[i] < 0) {
      if (!partial) {
        throw ConfigError(path + ": missing parameter " + params.at(i).name);
      }
      ++out.missing;
      continue;
    }
    params.at(i).value = stored[slot_of[i]].value;
    ++out.loaded;
  }

  if (!header.at("state").is_null()) {
    out.state = state_from_json(header.at("state"));
    out.has_optimizer = true;
  }
  if (trainer != nullptr && out.has_optimizer) {
    AdamW &opt = trainer->optimizer();
    std::vector<Matrix> m(stored.size()), v(stored.size());
    for (size_t k = 0; k < stored.size(); ++k) {
      m[k].resize(stored[k].value.rows(), stored[k].value.cols());
      read_matrix(in, m[k], path);
    }
    for (size_t k = 0; k < stored.size(); ++k) {
      v[k].resize(stored[k].value.rows(), stored[k].value.cols());
      read_matrix(in, v[k], path);
    }
    for (int i = 0; i < params.size(); ++i) {
      if (slot_of[i] < 0) {
        opt.first_moment()[i].setZero();
        opt.second_moment()[i].setZero();
      } else {
        opt.first_moment()[i] = m[slot_of[i]];
        opt.second_moment()[i] = v[slot_of[i]];
      }
    }
    opt.set_steps(header.at("optimizer_steps").get<int>());
    TrainState state = out.state;
    if (static_cast<int>(state.linker_done.size()) != model.kb_count()) {
      if (!partial) {
        throw ConfigError(path + ": checkpoint tracks " +
                          std::to_string(state.linker_done.size()) +
                          " KB slots, model has " + std::to_string(model.kb_count()));
      }
      state.linker_done.resize(model.kb_count(), false);
    }
    trainer->state() = state;
  }
  return out;
}

}  // namespace karlm
