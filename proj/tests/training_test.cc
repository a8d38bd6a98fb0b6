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

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "helpers.h"
#include "karlm/linalg.h"
#include "karlm/training.h"

using namespace karlm;
using karlm::testing::link_setup;
using karlm::testing::LinkSetup;
using karlm::testing::max_abs;
using karlm::testing::TempDir;
using karlm::testing::toy_encoder;
using karlm::testing::toy_kar;
using karlm::testing::toy_model;
using karlm::testing::toy_pairs;

namespace {

SynthLinkingConfig small_linking() {
  SynthLinkingConfig c;
  c.groups = 4;
  c.senses = 2;
  c.train_per_entity = 6;
  c.test_per_entity = 2;
  c.fillers = 8;
  c.entity_dim = 4;
  return c;
}

LinkSetup small_link_setup(uint64_t seed = 1) {
  return link_setup(small_linking(), toy_encoder(2), 1, toy_kar(), seed);
}

ScheduleConfig quick(int steps, double lr = 1e-3) {
  ScheduleConfig s;
  s.total_steps = steps;
  s.lr = lr;
  s.batch_size = 4;
  s.prefetch = 0;
  return s;
}

std::vector<Matrix> snapshot(const ParameterSet &p) {
  std::vector<Matrix> out;
  for (int i = 0; i < p.size(); ++i) out.push_back(p.at(i).value);
  return out;
}

// Examples over the toy KB in which every sentence has candidate spans.
std::vector<EncoderInput> toy_inputs(const KnowledgeModel &m, int n, uint64_t seed) {
  std::vector<EncoderInput> out;
  for (const PairExample &ex : toy_pairs(m.vocab(), n, seed)) {
    out.push_back(frame_pair(m, ex.a, ex.b));
  }
  return out;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("learning-rate schedule") {
  ScheduleConfig s;
  s.lr = 1e-3;
  s.total_steps = 1000;
  s.warmup = 0.1;
  CHECK(lr_at(0, "kar", s) == 0.0);
  CHECK(lr_at(100, "kar", s) == 1e-3);
  CHECK(lr_at(50, "kar", s) == doctest::Approx(5e-4).epsilon(1e-12));
  // Halfway through the decay: 0.25 * lr * 450 / 900.
  CHECK(std::abs(lr_at(550, "below", s) - 0.25 * 1e-3 * 0.5) < 1e-18);
  CHECK(std::abs(lr_at(775, "above", s) - 0.5 * 1e-3 * 0.25) < 1e-18);
  CHECK(lr_at(1000, "base", s) == 0.0);
  CHECK_THROWS_AS(lr_at(10, "middle", s), std::invalid_argument);
  CHECK_THROWS_AS(lr_at(1001, "kar", s), std::out_of_range);
  CHECK_THROWS_AS(lr_at(-1, "kar", s), std::out_of_range);
}

TEST_CASE("schedule validation") {
  ScheduleConfig s;
  CHECK_NOTHROW(s.validate());
  s.multipliers["kar"] = 0.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = ScheduleConfig{};
  s.multipliers.erase("below");
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = ScheduleConfig{};
  s.warmup = 1.5;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("parameter groups relative to the KB layer") {
  auto m = toy_model(1, 1, 3);
  std::map<std::string, std::string> seen;
  for (int i = 0; i < m->params().size(); ++i) {
    seen[m->params().at(i).name] = parameter_group(*m, i, 0);
  }
  CHECK(seen["embeddings.token"] == "below");
  CHECK(seen["block1.attn.query.weight"] == "below");
  CHECK(seen["block2.attn.query.weight"] == "above");
  CHECK(seen["block3.out_norm.gain"] == "above");
  CHECK(seen["mlm.bias"] == "above");
  CHECK(seen["kar.toy.down.weight"] == "kar");
  CHECK(parameter_group(*m, 0, -1) == "base");
}

TEST_CASE("AdamW first step by hand") {
  ParameterSet ps;
  ps.add("w", karlm::testing::mat({{1.0, -2.0}}));
  ps.add("w.bias", karlm::testing::mat({{0.5}}));
  ScheduleConfig s;
  s.weight_decay = 0.01;
  s.epsilon = 1e-6;
  AdamW opt(ps, s);
  Gradients g(ps);
  g[0] = karlm::testing::mat({{0.3, -4.0}});
  g[1] = karlm::testing::mat({{2.0}});
  opt.step(ps, g, {0.1, 0.1}, {true, true});
  // m_hat = g, v_hat = g^2, so the update is g / (|g| + eps).
  auto upd = [](double x) { return x / (std::abs(x) + 1e-6); };
  CHECK(std::abs(ps.get("w").value(0, 0) - (1.0 - 0.1 * (upd(0.3) + 0.01 * 1.0))) < 1e-15);
  CHECK(std::abs(ps.get("w").value(0, 1) - (-2.0 - 0.1 * (upd(-4.0) - 0.02))) < 1e-15);
  CHECK(std::abs(ps.get("w.bias").value(0, 0) - (0.5 - 0.1 * upd(2.0))) < 1e-15);
  CHECK(opt.steps() == 1);

  // Masked-out parameters keep value and moments.
  const Matrix before = ps.get("w").value;
  opt.step(ps, g, {0.1, 0.1}, {false, true});
  CHECK(ps.get("w").value == before);
}

TEST_CASE("gradient clipping") {
  ParameterSet ps;
  ps.add("a", Matrix::Zero(1, 2));
  ps.add("b", Matrix::Zero(1, 1));
  Gradients g(ps);
  g[0] = karlm::testing::mat({{3, 0}});
  g[1] = karlm::testing::mat({{4}});
  CHECK(clip_gradients(g, {true, true}, 1.0) == 5.0);
  CHECK(std::abs(g[0](0, 0) - 0.6) < 1e-15);
  CHECK(std::abs(g[1](0, 0) - 0.8) < 1e-15);
  g[0] = karlm::testing::mat({{3, 0}});
  g[1] = karlm::testing::mat({{4}});
  CHECK(clip_gradients(g, {true, false}, 10.0) == 3.0);
  CHECK(g[0](0, 0) == 3.0);
}

TEST_CASE("early stopping") {
  EarlyStopping e(1e-4, 3);
  CHECK_FALSE(e.observe(1.0));
  CHECK_FALSE(e.observe(0.5));
  CHECK_FALSE(e.observe(0.49995));  // not enough improvement
  CHECK_FALSE(e.observe(0.6));
  CHECK(e.observe(0.5));
  CHECK(e.bad_evals() == 3);
  EarlyStopping f(1e-4, 2);
  CHECK_FALSE(f.observe(1.0));
  CHECK_FALSE(f.observe(1.0));
  CHECK_FALSE(f.observe(0.5));  // improvement resets the count
  CHECK_FALSE(f.observe(0.5));
  CHECK(f.observe(0.5));
}

TEST_CASE("masking selects an exact count and is deterministic") {
  auto m = toy_model(1);
  MaskingConfig mc;
  for (const EncoderInput &in : toy_inputs(*m, 30, 3)) {
    int eligible = 0;
    for (int id : in.ids) eligible += m->vocab().is_reserved(id) ? 0 : 1;
    Rng r1(17), r2(17);
    MaskedExample a = mask_example(*m, in, true, mc, r1);
    MaskedExample b = mask_example(*m, in, true, mc, r2);
    CHECK(static_cast<long>(a.targets.size()) ==
          std::max<long>(1, std::lround(0.15 * eligible)));
    CHECK(a.input.ids == b.input.ids);
    REQUIRE(a.targets.size() == b.targets.size());
    for (size_t k = 0; k < a.targets.size(); ++k) {
      CHECK(a.targets[k].position == b.targets[k].position);
      CHECK(a.targets[k].gold == in.ids[a.targets[k].position]);
      CHECK_FALSE(m->vocab().is_reserved(a.targets[k].gold));
    }
  }
}

TEST_CASE("masking regime frequencies") {
  auto m = toy_model(2);
  MaskingConfig mc;
  std::array<int, 3> tok{}, span{};
  int kept_same = 0;
  Rng rng(99);
  const auto inputs = toy_inputs(*m, 40, 5);
  int i = 0;
  while (tok[0] + tok[1] + tok[2] < 12000) {
    const EncoderInput &in = inputs[i++ % inputs.size()];
    MaskedExample ex = mask_example(*m, in, true, mc, rng);
    for (size_t k = 0; k < ex.targets.size(); ++k) {
      const int pos = ex.targets[k].position;
      switch (ex.token_regime[k]) {
        case Regime::kMask:
          ++tok[0];
          CHECK(ex.input.ids[pos] == m->vocab().mask());
          break;
        case Regime::kRandom:
          ++tok[1];
          CHECK_FALSE(m->vocab().is_reserved(ex.input.ids[pos]));
          break;
        case Regime::kKeep:
          ++tok[2];
          kept_same += ex.input.ids[pos] == in.ids[pos];
          break;
      }
    }
    for (auto [s, r] : ex.span_regime[0]) ++span[static_cast<int>(r)];
  }
  const double n = tok[0] + tok[1] + tok[2];
  CHECK(kept_same == tok[2]);
  const double ns = span[0] + span[1] + span[2];
  const double probs[3] = {0.8, 0.1, 0.1};
  for (int r = 0; r < 3; ++r) {
    CHECK(std::abs(tok[r] / n - probs[r]) < 3 * std::sqrt(probs[r] * (1 - probs[r]) / n));
    CHECK(std::abs(span[r] / ns - probs[r]) <
          3 * std::sqrt(probs[r] * (1 - probs[r]) / ns));
  }
}

TEST_CASE("candidate masking rules") {
  auto m = toy_model(3);
  const KnowledgeBase &kb = *m->slot(0).kb;
  MaskingConfig mc;
  int seen[3] = {0, 0, 0};
  Rng rng(5);
  for (const EncoderInput &in : toy_inputs(*m, 300, 8)) {
    MaskedExample ex = mask_example(*m, in, true, mc, rng);
    for (auto [s, r] : ex.span_regime[0]) {
      ++seen[static_cast<int>(r)];
      const auto &before = in.candidates[0].spans[s].candidates;
      const auto &after = ex.input.candidates[0].spans[s].candidates;
      if (r == Regime::kMask) {
        REQUIRE(after.size() == 1);
        CHECK(after[0].entity == kb.mask_id());
        CHECK(after[0].prior == 1.0);
      } else {
        REQUIRE(after.size() == before.size());
        for (size_t k = 0; k < after.size(); ++k) {
          CHECK(after[k].prior == before[k].prior);
          if (before[k].entity == kb.null_id()) {
            CHECK(after[k].entity == kb.null_id());
          } else if (r == Regime::kKeep) {
            CHECK(after[k].entity == before[k].entity);
          } else {
            CHECK(after[k].entity >= 0);
            CHECK(after[k].entity < kb.entity_count());
          }
        }
      }
    }
    // Spans away from every target are untouched.
    for (int s = 0; s < in.candidates[0].size(); ++s) {
      bool listed = false;
      for (auto [t, r] : ex.span_regime[0]) listed |= t == s;
      if (!listed) {
        CHECK(ex.input.candidates[0].spans[s].candidates.size() ==
              in.candidates[0].spans[s].candidates.size());
      }
    }
  }
  CHECK(seen[0] > 0);
  CHECK(seen[1] > 0);
  CHECK(seen[2] > 0);
}

TEST_CASE("masked-out candidates cannot leak into the MLM loss") {
  auto m = toy_model(4);
  const KnowledgeBase &kb = *m->slot(0).kb;
  MaskingConfig mc;
  mc.rate = 0.4;
  int compared = 0;
  const auto inputs = toy_inputs(*m, 200, 6);
  for (size_t i = 0; i < inputs.size(); ++i) {
    // Same pieces, different candidate identities everywhere.
    EncoderInput other = inputs[i];
    for (auto &span : other.candidates[0].spans)
      for (auto &c : span.candidates)
        if (c.entity != kb.null_id()) c.entity = (c.entity + 2) % kb.entity_count();
    Rng r1 = substream(7, "leak", i), r2 = substream(7, "leak", i);
    MaskedExample a = mask_example(*m, inputs[i], true, mc, r1);
    MaskedExample b = mask_example(*m, other, true, mc, r2);
    bool all_masked = !a.span_regime[0].empty();
    for (auto [s, r] : a.span_regime[0]) all_masked &= r == Regime::kMask;
    if (!all_masked || a.span_regime[0].size() != a.input.candidates[0].spans.size()) continue;
    Tape t1, t2;
    const double la = mlm_loss(t1, *m, encode(t1, *m, a.input), a.targets).value()(0, 0);
    const double lb = mlm_loss(t2, *m, encode(t2, *m, b.input), b.targets).value()(0, 0);
    CHECK(la == lb);
    ++compared;
  }
  CHECK(compared > 10);
}

TEST_CASE("batches are deterministic, homogeneous and mixed 4:1") {
  LinkSetup s = small_link_setup();
  s.data.unlabeled = toy_pairs(s.model->vocab(), 5, 1);
  for (auto &ex : s.data.unlabeled) {
    // Re-tokenize into the linking vocabulary: all [UNK] is fine here.
    for (int &id : ex.a) id = s.model->vocab().unk();
    for (int &id : ex.b) id = s.model->vocab().unk();
  }
  ScheduleConfig sc = quick(10);
  sc.batch_size = 1;
  MaskingConfig mc;
  int unlabeled = 0;
  const int n = 10000;
  for (int step = 0; step < n; ++step) {
    TrainingBatch b = make_batch(*s.model, s.data, sc, mc, "full.0", step, false, 0);
    unlabeled += b.source < 0;
    if (b.source >= 0) {
      CHECK(b.examples.size() == 1);
      CHECK(b.examples[0].targets.empty());
      CHECK_FALSE(b.gold[0][0].empty());
    }
  }
  CHECK(std::abs(unlabeled / static_cast<double>(n) - 0.8) < 0.015);

  sc.batch_size = 6;
  TrainingBatch a = make_batch(*s.model, s.data, sc, mc, "full.0", 42, false, 0);
  TrainingBatch b = make_batch(*s.model, s.data, sc, mc, "full.0", 42, false, 0);
  TrainingBatch c = make_batch(*s.model, s.data, sc, mc, "full.0", 43, false, 0);
  CHECK(a.source == b.source);
  for (size_t k = 0; k < a.examples.size(); ++k) {
    CHECK(a.examples[k].input.ids == b.examples[k].input.ids);
  }
  bool differs = a.source != c.source;
  for (size_t k = 0; k < a.examples.size() && !differs; ++k) {
    differs = a.examples[k].input.ids != c.examples[k].input.ids;
  }
  CHECK(differs);
  // The linker stage draws supervised batches only.
  for (int step = 0; step < 50; ++step) {
    CHECK(make_batch(*s.model, s.data, sc, mc, "linker.0", step, true, 0).source == 0);
  }
}

TEST_CASE("supervision framing") {
  auto m = toy_model(1);
  const KnowledgeBase &kb = *m->slot(0).kb;
  LinkExample ex;
  ex.ids = tokenize("paris went to new york .", m->vocab());
  ex.spans = {{0, 0}, {3, 4}};
  ex.gold = {1, 2};  // Berlin is not a candidate of "new york"
  FramedLink f = frame_link_example(*m, 0, ex);
  REQUIRE(f.input.candidates[0].size() == 3);  // paris, new york, york
  CHECK(f.gold_index[0] == 1);
  CHECK(f.gold_index[1] == -1);
  // The unmatched "york" span is supervised towards NULL.
  const auto &york = f.input.candidates[0].spans[2].candidates;
  CHECK(york[f.gold_index[2]].entity == kb.null_id());
}

TEST_CASE("alignment initialisation") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    ParameterSet ps;
    KarConfig cfg = toy_kar(16);
    KarParams k = make_kar_params(ps, "k", 64, cfg, *karlm::testing::toy_kb(16), rng);
    k.down.weight->value = random_normal(64, 16, 1.0, rng);
    k.up.weight->value.setZero();
    k.up.bias->value.setOnes();
    init_alignment(k);
    CHECK(penrose_residual(k.down.weight->value, k.up.weight->value) < 1e-8);
    CHECK(k.up.bias->value == Matrix::Zero(1, 64));
  }
  ParameterSet ps;
  KarParams k = make_kar_params(ps, "k", 6, toy_kar(4), *karlm::testing::toy_kb(4), rng);
  Eigen::HouseholderQR<Matrix> qr(random_normal(6, 4, 1.0, rng));
  k.down.weight->value = qr.householderQ() * Matrix::Identity(6, 4);
  init_alignment(k);
  CHECK(max_abs(k.up.weight->value, k.down.weight->value.transpose()) < 1e-12);
  k.down.weight->value.col(3) = k.down.weight->value.col(0);
  CHECK_THROWS_AS(init_alignment(k), SingularityError);
}

TEST_CASE("linker stage trains only the linker") {
  // Three steps: the schedule gives step 0 a zero rate.
  LinkSetup s = small_link_setup();
  Trainer trainer(*s.model, s.data, quick(3), MaskingConfig{});
  const std::vector<Matrix> before = snapshot(s.model->params());
  trainer.pretrain_linker(0);
  const std::vector<int> linker = s.model->slot(0).params.linker_indices();
  int changed = 0;
  for (int i = 0; i < s.model->params().size(); ++i) {
    const bool is_linker = std::find(linker.begin(), linker.end(), i) != linker.end();
    const bool same = s.model->params().at(i).value == before[i];
    if (!is_linker) {
      INFO(s.model->params().at(i).name);
      CHECK(same);
    }
    changed += !same;
  }
  CHECK(changed > 0);
  for (int i : linker) {
    const std::string &name = s.model->params().at(i).name;
    CHECK(name.find(".recontext") == std::string::npos);
    CHECK(name.find(".up.") == std::string::npos);
  }
}

TEST_CASE("linker loss decreases over the first steps") {
  LinkSetup s = small_link_setup(2);
  s.data.validation[0] = s.data.supervised[0];
  ScheduleConfig sc = quick(10, 2e-4);
  sc.warmup = 0.0;
  sc.batch_size = static_cast<int>(s.data.supervised[0].size());
  Trainer trainer(*s.model, s.data, sc, MaskingConfig{});
  std::vector<double> losses = {trainer.linker_validation_loss(0)};
  StageOptions opts;
  opts.on_step = [&](const StepReport &) {
    losses.push_back(trainer.linker_validation_loss(0));
  };
  trainer.pretrain_linker(0, opts);
  REQUIRE(losses.size() == 11);
  for (size_t i = 1; i < losses.size(); ++i) CHECK(losses[i] < losses[i - 1]);
}

TEST_CASE("stage order and skipping") {
  LinkSetup s = small_link_setup();
  {
    Trainer t(*s.model, s.data, quick(2), MaskingConfig{});
    CHECK_THROWS_AS(t.multitask_train(0), ConfigError);
    CHECK_THROWS_AS(t.pretrain_linker(1), ConfigError);
  }
  {
    TrainingData empty;
    empty.unlabeled = toy_pairs(s.model->vocab(), 4, 1);
    Trainer t(*s.model, empty, quick(2), MaskingConfig{});
    StageResult r = t.pretrain_linker(0);
    CHECK(r.skipped);
    CHECK(r.notice.find("linker stage skipped") != std::string::npos);
    CHECK_NOTHROW(t.multitask_train(0));
  }
}

TEST_CASE("full stage aligns first and leaves entity tables alone") {
  LinkSetup s = small_link_setup();
  s.data.unlabeled = toy_pairs(*s.vocab, 8, 2);
  const Matrix entities = s.kb->embeddings();
  Trainer t(*s.model, s.data, quick(1, 1e-12), MaskingConfig{});
  t.pretrain_linker(0);
  KarParams &k = s.model->slot(0).params;
  k.up.weight->value.setZero();
  k.up.bias->value.setOnes();
  t.multitask_train(0);
  CHECK(penrose_residual(k.down.weight->value, k.up.weight->value) < 1e-6);
  CHECK(k.up.bias->value.cwiseAbs().maxCoeff() < 1e-6);
  CHECK(s.model->slot(0).kb->embeddings() == entities);
  CHECK(t.state().kbs_added == 1);
}

TEST_CASE("a second KB leaves the first KB's table untouched") {
  auto vocab = karlm::testing::toy_vocab();
  auto kb0 = karlm::testing::toy_kb(4, 3);
  auto kb1 = std::make_shared<const KnowledgeBase>(KnowledgeBase::build(
      "upper", {"a", "b"}, Matrix::Identity(2, 4), {{"city", {{0, 0.6}, {1, 0.3}}}}, {}));
  EncoderConfig enc = toy_encoder(3);
  enc.vocab_size = vocab->size();
  enc.insertions = {{1, "toy"}, {2, "upper"}};
  KnowledgeModel m(vocab, enc, {{kb0, toy_kar()}, {kb1, toy_kar()}}, 5);
  TrainingData data;
  data.unlabeled = toy_pairs(*vocab, 16, 3);
  Trainer t(m, data, quick(3), MaskingConfig{});
  CHECK(t.pretrain_linker(0).skipped);
  t.multitask_train(0);
  const Matrix table0 = kb0->embeddings();
  auto kar0 = [&] {
    std::vector<Matrix> v;
    for (int i : m.slot(0).params.all_indices()) v.push_back(m.params().at(i).value);
    return v;
  };
  const std::vector<Matrix> before = kar0();
  CHECK(t.pretrain_linker(1).skipped);
  t.multitask_train(1);
  CHECK(kb0->embeddings() == table0);
  CHECK(kar0() != before);
  CHECK(t.state().kbs_added == 2);
}

TEST_CASE("unlabeled loss falls during training") {
  auto vocab = karlm::testing::toy_vocab();
  EncoderConfig enc = toy_encoder(2);
  enc.vocab_size = vocab->size();
  KnowledgeModel m(vocab, enc, {}, 3);
  TrainingData data;
  data.unlabeled = toy_pairs(*vocab, 64, 4);
  ScheduleConfig sc = quick(300, 3e-3);
  sc.batch_size = 8;
  Trainer t(m, data, sc, MaskingConfig{});
  std::vector<double> loss;
  StageOptions opts;
  opts.on_step = [&](const StepReport &r) { loss.push_back(r.loss.total); };
  t.multitask_train(-1, opts);
  // 100-step moving averages at the start, middle and end.
  auto avg = [&](int from) {
    return std::accumulate(loss.begin() + from, loss.begin() + from + 100, 0.0) / 100;
  };
  CHECK(avg(100) < avg(0));
  CHECK(avg(200) < avg(100));
}

TEST_CASE("training is reproducible and resumes exactly") {
  TempDir dir("resume");
  auto run = [&](int stop_after, bool resume) {
    LinkSetup s = small_link_setup(3);
    ScheduleConfig sc = quick(12);
    sc.prefetch = 2;
    Trainer t(*s.model, s.data, sc, MaskingConfig{});
    StageOptions opts;
    opts.checkpoint_path = dir.file("ck.bin");
    opts.stop_after = stop_after;
    if (resume) {
      LoadedCheckpoint c = load_checkpoint(opts.checkpoint_path, *s.model, &t);
      CHECK(c.has_optimizer);
      CHECK(t.state().step == 5);
      opts.stop_after = -1;
      t.resume(opts);
    } else {
      t.pretrain_linker(0, opts);
    }
    return s.model->params().checksum();
  };
  const uint64_t full = run(-1, false);
  CHECK(run(-1, false) == full);
  const uint64_t partial = run(5, false);
  CHECK(partial != full);
  CHECK(run(-1, true) == full);
}

TEST_CASE("checkpoint round trip and shape checks") {
  TempDir dir("ckpt");
  auto a = toy_model(1);
  auto b = toy_model(2);
  CHECK(a->params().checksum() != b->params().checksum());
  save_checkpoint(dir.file("a.bin"), *a, nullptr, {{"note", "x"}});
  LoadedCheckpoint c = load_checkpoint(dir.file("a.bin"), *b, nullptr);
  CHECK(c.meta["note"] == "x");
  CHECK(c.loaded == a->params().size());
  CHECK(a->params().checksum() == b->params().checksum());

  auto wide = toy_model(1, 1, 3);
  CHECK_THROWS_AS(load_checkpoint(dir.file("a.bin"), *wide, nullptr), ConfigError);
  LoadedCheckpoint p = load_checkpoint(dir.file("a.bin"), *wide, nullptr, true);
  CHECK(p.missing > 0);
  std::ofstream(dir.file("junk.bin")) << "not a checkpoint";
  CHECK_THROWS_AS(load_checkpoint(dir.file("junk.bin"), *b, nullptr), ConfigError);
}

}  // TEST_SUITE
