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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "helpers.h"
#include "karlm/eval.h"

using namespace karlm;
using karlm::testing::mat;
using karlm::testing::TempDir;
using karlm::testing::toy_model;
using karlm::testing::toy_pairs;

namespace {

// psi = sign * prior through the first hidden unit.
void prior_scorer(KnowledgeModel &m, double sign) {
  KarParams &k = m.slot(0).params;
  k.score_hidden.weight->value.setZero();
  k.score_hidden.bias->value.setZero();
  k.score_hidden.weight->value(0, 0) = 1.0;
  k.score_out.weight->value.setZero();
  k.score_out.weight->value(0, 0) = sign;
  k.score_out.bias->value.setZero();
}

std::vector<ProbeTuple> probe_fixture(int n, uint64_t seed) {
  const std::vector<std::string> fillers = {"paris", "berlin", "new york", "york", "hamer"};
  const std::vector<std::pair<std::string, std::string>> templates = {
      {"located", "SUBJ is a city in OBJ ."}, {"river", "the river of SUBJ is in OBJ ."},
      {"born", "OBJ was born in SUBJ ."}};
  Rng rng(seed);
  std::vector<ProbeTuple> out;
  for (int i = 0; i < n; ++i) {
    const auto &[rel, text] = templates[i % templates.size()];
    const size_t s = uniform_index(rng, fillers.size());
    size_t o = uniform_index(rng, fillers.size() - 1);
    if (o >= s) ++o;
    out.push_back({rel, text, fillers[s], fillers[o]});
  }
  return out;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("perplexity from a negative log-likelihood sum") {
  CHECK(perplexity_from({std::log(4.0) * 3, 3}) == doctest::Approx(4.0).epsilon(1e-15));
  CHECK(perplexity_from({0.0, 7}) == 1.0);
  CHECK_THROWS_AS(perplexity_from({1.0, 0}), ContractError);
}

TEST_CASE("masked NLL adds up over shards") {
  auto m = toy_model(2);
  const auto corpus = toy_pairs(m->vocab(), 20, 7);
  MaskingConfig mc;
  const NllSum all = masked_nll(*m, corpus, mc, 5);
  const std::vector<PairExample> head(corpus.begin(), corpus.begin() + 8);
  const std::vector<PairExample> tail(corpus.begin() + 8, corpus.end());
  const NllSum a = masked_nll(*m, head, mc, 5, 0);
  const NllSum b = masked_nll(*m, tail, mc, 5, 8);
  CHECK(a.positions + b.positions == all.positions);
  CHECK(std::abs(a.sum + b.sum - all.sum) < 1e-12);
  CHECK(perplexity(*m, corpus, mc, 5) == perplexity_from(all));
  // A different seed masks other positions.
  CHECK(masked_nll(*m, corpus, mc, 6).sum != all.sum);
}

TEST_CASE("perplexity of a uniform model is the vocabulary size") {
  auto m = toy_model(3);
  m->encoder().token_embedding->value.setZero();
  m->encoder().mlm_bias->value.setZero();
  const auto corpus = toy_pairs(m->vocab(), 10, 1);
  CHECK(std::abs(perplexity(*m, corpus, MaskingConfig{}, 1) - m->vocab().size()) < 1e-9);
}

TEST_CASE("rank with ties broken by piece id") {
  const Matrix lp = mat({{-1.0, -0.5, -1.0, -3.0}});
  CHECK(rank_of(lp, 0, 1) == 1);
  CHECK(rank_of(lp, 0, 0) == 2);
  CHECK(rank_of(lp, 0, 2) == 3);
  CHECK(rank_of(lp, 0, 3) == 4);
}

TEST_CASE("instance MRR aggregation") {
  CHECK(instance_mrr({1}, MrrAggregate::kMean) == 1.0);
  CHECK(instance_mrr({2, 4}, MrrAggregate::kMean) == 0.375);
  CHECK(instance_mrr({2, 4}, MrrAggregate::kMin) == 0.25);
  CHECK_THROWS_AS(instance_mrr({}, MrrAggregate::kMean), ContractError);
  CHECK(parse_mrr_aggregate("min") == MrrAggregate::kMin);
  CHECK_THROWS(parse_mrr_aggregate("median"));
}

TEST_CASE("probe instances") {
  auto m = toy_model();
  const Vocabulary &v = m->vocab();
  const ProbeTuple t{"located", "SUBJ is a city in OBJ .", "hamer", "new york"};
  ProbeInstance obj = make_probe_instance(v, t, ProbeSide::kObject);
  CHECK(obj.ids == std::vector<int>{v.id("ham"), v.id("##er"), v.id("is"), v.id("a"),
                                    v.id("city"), v.id("in"), v.mask(), v.mask(), v.id(".")});
  CHECK(obj.positions == std::vector<int>{6, 7});
  CHECK(obj.gold == std::vector<int>{v.id("new"), v.id("york")});
  ProbeInstance subj = make_probe_instance(v, t, ProbeSide::kSubject);
  CHECK(subj.positions == std::vector<int>{0, 1});
  CHECK(subj.gold == std::vector<int>{v.id("ham"), v.id("##er")});

  // Object before subject.
  ProbeInstance rev =
      make_probe_instance(v, {"born", "OBJ was born in SUBJ .", "paris", "york"},
                          ProbeSide::kSubject);
  CHECK(rev.positions == std::vector<int>{4});
  CHECK(rev.ids[0] == v.id("york"));

  CHECK_THROWS_AS(make_probe_instance(v, {"r", "SUBJ is OBJ and OBJ", "paris", "york"},
                                      ProbeSide::kObject),
                  ProbeError);
  CHECK_THROWS_AS(make_probe_instance(v, {"r", "SUBJ is here", "paris", "york"},
                                      ProbeSide::kObject),
                  ProbeError);
  CHECK_THROWS_AS(make_probe_instance(v, {"r", "SUBJ is OBJ", "paris", "london"},
                                      ProbeSide::kObject),
                  ProbeError);
}

TEST_CASE("MRR matches a sort-based recomputation") {
  auto m = toy_model(4);
  const Vocabulary &v = m->vocab();
  const auto tuples = probe_fixture(50, 3);
  std::map<std::string, std::vector<double>> per_rel;
  double sum = 0;
  int n = 0;
  for (const ProbeTuple &t : tuples) {
    for (ProbeSide side : {ProbeSide::kSubject, ProbeSide::kObject}) {
      ProbeInstance inst = make_probe_instance(v, t, side);
      EncoderInput in = frame_pair(*m, inst.ids, {});
      Tape tape;
      EncoderState st = encode(tape, *m, in);
      double rr = 0;
      for (size_t k = 0; k < inst.gold.size(); ++k) {
        const Matrix lp =
            mlm_log_probs(tape, *m, st, std::vector<int>{inst.positions[k] + 1}).value();
        std::vector<int> order(v.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return lp(0, a) > lp(0, b); });
        rr += 1.0 / (std::find(order.begin(), order.end(), inst.gold[k]) - order.begin() + 1);
      }
      rr /= inst.gold.size();
      per_rel[t.relation].push_back(rr);
      sum += rr;
      ++n;
    }
  }
  const MrrReport r = mrr_probe(*m, tuples);
  CHECK(r.instances == 100);
  CHECK(r.total == sum / n);
  for (const auto &[rel, xs] : per_rel) {
    CHECK(r.instances_per_relation.at(rel) == static_cast<int>(xs.size()));
    CHECK(r.per_relation.at(rel) == std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size());
  }
  const MrrReport obj = mrr_probe(*m, tuples, MrrAggregate::kMean, {ProbeSide::kObject});
  CHECK(obj.instances == 50);
}

TEST_CASE("strong-match F1") {
  std::vector<std::vector<ELPrediction>> pred = {
      {{0, 0, 1, 0.9}, {2, 3, 4, 0.5}},  // one exact, one with the wrong entity
      {{1, 2, 0, 0.1}},                  // boundary off by one
      {}};
  std::vector<std::vector<GoldLink>> gold = {{{0, 0, 1}, {2, 3, 5}}, {{1, 1, 0}}, {{4, 4, 2}}};
  F1Report r = el_f1(pred, gold);
  CHECK(r.correct == 1);
  CHECK(r.predicted == 3);
  CHECK(r.gold == 4);
  CHECK(r.precision == 1.0 / 3);
  CHECK(r.recall == 0.25);
  CHECK(r.f1 == doctest::Approx(2.0 / 7).epsilon(1e-15));

  F1Report none = el_f1({{}, {}}, {{{0, 0, 1}}, {}});
  CHECK(none.precision == 0.0);
  CHECK(none.f1 == 0.0);
  CHECK_THROWS_AS(el_f1({{}}, {}), std::invalid_argument);
}

TEST_CASE("F1 against pairwise matching on random fixtures") {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<ELPrediction>> pred(50);
    std::vector<std::vector<GoldLink>> gold(50);
    int correct = 0, np = 0, ng = 0;
    for (int i = 0; i < 50; ++i) {
      std::set<std::tuple<int, int, int>> g_seen, p_seen;
      for (int j = 0; j < 3; ++j) {
        const int s = static_cast<int>(uniform_index(rng, 4));
        GoldLink l{s, s + static_cast<int>(uniform_index(rng, 2)),
                   static_cast<int>(uniform_index(rng, 2))};
        if (g_seen.insert({l.start, l.end, l.entity}).second) gold[i].push_back(l);
        const int t = static_cast<int>(uniform_index(rng, 4));
        ELPrediction p{t, t + static_cast<int>(uniform_index(rng, 2)),
                       static_cast<int>(uniform_index(rng, 2)), 0.0};
        if (p_seen.insert({p.start, p.end, p.entity}).second) pred[i].push_back(p);
      }
      np += static_cast<int>(pred[i].size());
      ng += static_cast<int>(gold[i].size());
      for (const auto &p : pred[i])
        for (const auto &g : gold[i])
          correct += p.start == g.start && p.end == g.end && p.entity == g.entity;
    }
    const F1Report r = el_f1(pred, gold);
    CHECK(r.correct == correct);
    CHECK(r.predicted == np);
    CHECK(r.gold == ng);
  }
}

TEST_CASE("predicted links follow the argmax score") {
  auto m = toy_model(5);
  const std::vector<int> ids = tokenize("paris went to new york .", m->vocab());
  prior_scorer(*m, 1.0);
  const std::vector<ELPrediction> p = predict_links(*m, 0, ids);
  REQUIRE(p.size() == 3);
  CHECK(p[0].start == 0);
  CHECK(p[0].entity == 0);
  CHECK(p[0].score == doctest::Approx(0.7));
  CHECK(p[1].start == 3);
  CHECK(p[1].end == 4);
  CHECK(p[1].entity == 3);
  CHECK(p[2].entity == 4);
  // Preferring the smallest prior makes NULL win everywhere.
  prior_scorer(*m, -1.0);
  CHECK(predict_links(*m, 0, ids).empty());
  CHECK(predict_links(*m, 0, tokenize("the city .", m->vocab())).empty());
}

TEST_CASE("gold links drop NULL") {
  auto m = toy_model();
  const KnowledgeBase &kb = *m->slot(0).kb;
  LinkExample ex;
  ex.ids = {1, 2, 3};
  ex.spans = {{0, 0}, {1, 2}};
  ex.gold = {kb.null_id(), 3};
  const auto g = gold_links(ex, kb);
  REQUIRE(g.size() == 1);
  CHECK(g[0].start == 1);
  CHECK(g[0].entity == 3);
}

TEST_CASE("restricted linking") {
  auto m = toy_model(6);
  prior_scorer(*m, 1.0);
  const Vocabulary &v = m->vocab();
  TempDir dir("restricted");
  {
    std::ofstream f(dir.file("wsd.jsonl"));
    f << R"({"pieces": ["paris", "is", "a", "city"], "span": [0, 0], "gold": 1, "allowed": [1]})"
      << "\n"
      << R"({"pieces": ["paris", "is", "a", "city"], "span": [0, 0], "gold": 0, "allowed": [0, 1]})"
      << "\n"
      << R"({"pieces": ["the", "river", "."], "span": [1, 1], "gold": 2, "allowed": [2, 4]})"
      << "\n"
      << R"({"pieces": ["the", "river", "."], "span": [1, 1], "gold": 3, "allowed": [2, 4]})"
      << "\n\n";
  }
  const auto inst = load_restricted(dir.file("wsd.jsonl"), v);
  REQUIRE(inst.size() == 4);
  CHECK(inst[2].ids == std::vector<int>{v.id("the"), v.id("river"), v.id(".")});
  const RestrictedReport r = restricted_linking_accuracy(*m, 0, inst);
  // Paris restricted to the person sense; the river span gets uniform priors
  // and the tie goes to the first allowed entity.
  CHECK(r.total == 3);
  CHECK(r.correct == 3);
  CHECK(r.invalid == 1);
  CHECK(r.accuracy == 1.0);

  {
    std::ofstream f(dir.file("bad.jsonl"));
    f << R"({"pieces": ["paris"], "span": [0, 3], "gold": 0, "allowed": [0]})" << "\n";
  }
  CHECK_THROWS_AS(load_restricted(dir.file("bad.jsonl"), v), ConfigError);
}

TEST_CASE("reports carry seed and config hash") {
  Report r = make_report("mrr", 0.25, {{"instances", 4}, {"per_relation", {{"a", 0.5}}}}, 7,
                         "00ff");
  CHECK(r.json["metric"] == "mrr");
  CHECK(r.json["value"] == 0.25);
  CHECK(r.json["seed"] == 7);
  CHECK(r.json["config_hash"] == "00ff");
  CHECK(r.json["instances"] == 4);
  CHECK(r.text.find("mrr") == 0);
  CHECK(r.text.find("  a ") != std::string::npos);
  CHECK(r.text.find("seed 7  config 00ff") != std::string::npos);
}

}  // TEST_SUITE
