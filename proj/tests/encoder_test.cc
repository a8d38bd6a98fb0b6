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
#include <string>
#include <vector>

#include "doctest.h"
#include "helpers.h"
#include "reference.h"
#include "karlm/encoder.h"

using namespace karlm;
using karlm::testing::max_abs;
using karlm::testing::Rows;
using karlm::testing::naive_block;
using karlm::testing::norm;
using karlm::testing::toy_encoder;
using karlm::testing::toy_kar;
using karlm::testing::toy_kb;
using karlm::testing::toy_vocab;

namespace {

Rows naive_encode(const KnowledgeModel &model, const EncoderInput &in) {
  const ParameterSet &p = model.params();
  const Matrix &tok = p.get("embeddings.token").value;
  const Matrix &pos = p.get("embeddings.position").value;
  const Matrix &seg = p.get("embeddings.segment").value;
  Rows h(in.ids.size(), std::vector<double>(tok.cols()));
  for (size_t i = 0; i < in.ids.size(); ++i)
    for (int j = 0; j < tok.cols(); ++j)
      h[i][j] = tok(in.ids[i], j) + pos(i, j) + seg(in.segments[i], j);
  h = norm(h, p, "embeddings.norm");
  for (int l = 1; l <= model.config().layers; ++l) {
    h = naive_block(h, h, p, "block" + std::to_string(l), model.config().heads);
  }
  return h;
}

std::unique_ptr<KnowledgeModel> plain_model(uint64_t seed, int layers = 2) {
  auto vocab = toy_vocab();
  EncoderConfig enc = toy_encoder(layers);
  enc.vocab_size = vocab->size();
  return std::make_unique<KnowledgeModel>(vocab, enc, std::vector<KbSpec>{}, seed);
}

EncoderInput pair_input(const KnowledgeModel &m, const std::string &a,
                        const std::string &b) {
  const auto ia = tokenize(a, m.vocab());
  const auto ib = tokenize(b, m.vocab());
  return frame_pair(m, ia, ib);
}

// Zero token embeddings make every logit equal to mlm.bias.
double mlm_with_bias(KnowledgeModel &m, const Matrix &bias,
                     const std::vector<MaskedTarget> &targets) {
  m.params().get("embeddings.token").value.setZero();
  m.params().get("mlm.bias").value = bias;
  Tape t;
  EncoderState s = encode(t, m, pair_input(m, "paris is a city .", ""));
  return mlm_loss(t, m, s, targets).value()(0, 0);
}

double nsp_with_bias(KnowledgeModel &m, double z, bool is_next) {
  m.params().get("nsp.weight").value.setZero();
  m.params().get("nsp.bias").value(0, 0) = z;
  Tape t;
  EncoderState s = encode(t, m, pair_input(m, "paris is a city .", "berlin ."));
  return nsp_loss(t, m, s, is_next).value()(0, 0);
}

}  // namespace

TEST_SUITE("encoder") {

TEST_CASE("tokenize: greedy longest match") {
  Vocabulary v = Vocabulary::from_pieces(
      {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "a", "adi", "##das", "##d", "##as",
       "shoe"});
  CHECK(tokenize("adidas", v) == std::vector<int>{v.id("adi"), v.id("##das")});
  CHECK(tokenize("shoe", v) == std::vector<int>{v.id("shoe")});
  CHECK(tokenize("Shoe, adidas", v) ==
        std::vector<int>{v.id("shoe"), v.unk(), v.id("adi"), v.id("##das")});
  CHECK(tokenize("xyz", v) == std::vector<int>{v.unk()});
  CHECK(tokenize("", v).empty());
  CHECK(detokenize(tokenize("adidas shoe", v), v) == "adidas shoe");
}

TEST_CASE("vocabulary rejects duplicates and missing reserved tokens") {
  CHECK_THROWS_AS(Vocabulary::from_pieces({"[PAD]", "[UNK]", "[CLS]", "[SEP]"}),
                  VocabularyError);
  CHECK_THROWS_AS(Vocabulary::from_pieces(
                      {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "a", "a"}),
                  VocabularyError);
}

TEST_CASE("encoder config validation") {
  EncoderConfig c = toy_encoder();
  c.vocab_size = 10;
  CHECK_NOTHROW(c.validate());
  EncoderConfig bad = c;
  bad.heads = 3;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = c;
  bad.insertions = {{3, "kb"}};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("encode shape and framing") {
  auto m = plain_model(1);
  EncoderInput in = pair_input(*m, "paris is a city", "berlin");
  CHECK(in.ids.front() == m->vocab().cls());
  CHECK(in.ids.size() == 8);
  CHECK(in.segments == std::vector<int>{0, 0, 0, 0, 0, 0, 1, 1});
  Tape t;
  EncoderState s = encode(t, *m, in);
  REQUIRE(s.layers.size() == 3);
  CHECK(s.layers.back().rows() == 8);
  CHECK(s.layers.back().cols() == 8);
  CHECK(s.layers.back().value().allFinite());
}

TEST_CASE("plain encoder matches a loop reference") {
  for (uint64_t seed : {1, 2, 3}) {
    auto m = plain_model(seed, 3);
    // Larger weights than the init so that nonlinearities matter.
    Rng rng(seed + 40);
    for (int i = 0; i < m->params().size(); ++i) {
      Parameter &p = m->params().at(i);
      p.value += random_normal(p.value.rows(), p.value.cols(), 0.3, rng);
    }
    EncoderInput in = pair_input(*m, "the river of berlin", "new york was a city .");
    Tape t;
    const Matrix got = encode(t, *m, in).layers.back().value();
    const Rows want = naive_encode(*m, in);
    CHECK(max_abs(got, want) < 1e-9);
  }
}

TEST_CASE("KAR with zero knowledge and zero output reduces to the plain encoder") {
  auto vocab = toy_vocab();
  auto base_kb = toy_kb();
  auto zero_kb = std::make_shared<const KnowledgeBase>(KnowledgeBase::build(
      "toy", {"Paris_city", "Paris_person", "Berlin", "New_York", "York"},
      Matrix::Zero(5, 4),
      {{"paris", {{0, 0.7}, {1, 0.3}}}, {"berlin", {{2, 1.0}}}}, {}));
  EncoderConfig enc = toy_encoder(3);
  enc.vocab_size = vocab->size();
  KnowledgeModel plain(vocab, enc, {}, 9);
  enc.insertions = {{2, "toy"}};
  KnowledgeModel kar(vocab, enc, {{zero_kb, toy_kar()}}, 9);
  for (int i = 0; i < plain.params().size(); ++i) {
    const Parameter &p = plain.params().at(i);
    kar.params().get(p.name).value = p.value;
  }
  kar.params().get("kar.toy.up.weight").value.setZero();
  kar.params().get("kar.toy.up.bias").value.setZero();

  EncoderInput in = pair_input(kar, "paris is a city", "berlin");
  REQUIRE(in.candidates[0].size() == 2);
  Tape t1, t2;
  EncoderState a = encode(t1, kar, in);
  EncoderState b = encode(t2, plain, pair_input(plain, "paris is a city", "berlin"));
  REQUIRE(a.kar[0].has_value());
  CHECK(max_abs(a.layers.back().value(), b.layers.back().value()) < 1e-10);
}

TEST_CASE("overlength input is an explicit error") {
  auto m = plain_model(1);
  std::vector<int> a(10, m->vocab().id("city")), b(5, m->vocab().id("city"));
  CHECK_THROWS_AS(frame_pair(*m, a, b), OverlengthError);
  std::vector<int> fits(13, m->vocab().id("city"));
  CHECK_NOTHROW(frame_pair(*m, fits, {}));
}

TEST_CASE("mlm loss hand values") {
  auto m = plain_model(4);
  const int v = m->vocab().size();
  const int g1 = m->vocab().id("paris"), g2 = m->vocab().id("city");

  CHECK(mlm_with_bias(*m, Matrix::Zero(1, v), {{1, g1}}) ==
        doctest::Approx(std::log(static_cast<double>(v))).epsilon(1e-14));

  Matrix sure = Matrix::Zero(1, v);
  sure(0, g1) = 800;
  CHECK(mlm_with_bias(*m, sure, {{1, g1}, {2, g1}}) == doctest::Approx(0.0).epsilon(1e-14));

  // Weights 2, 1 and 1/(V-2) for the rest: probabilities 1/2 and 1/4.
  Matrix half = Matrix::Constant(1, v, -std::log(static_cast<double>(v - 2)));
  half(0, g1) = std::log(2.0);
  half(0, g2) = 0.0;
  const double want = (std::log(2.0) + std::log(4.0)) / 2;
  CHECK(std::abs(mlm_with_bias(*m, half, {{1, g1}, {3, g2}}) - want) < 1e-12);
}

TEST_CASE("mlm loss rejects bad targets") {
  auto m = plain_model(4);
  Tape t;
  EncoderState s = encode(t, *m, pair_input(*m, "paris", ""));
  std::vector<MaskedTarget> out = {{3, 5}};
  CHECK_THROWS_AS(mlm_loss(t, *m, s, out), std::out_of_range);
  std::vector<MaskedTarget> none;
  CHECK_THROWS_AS(mlm_loss(t, *m, s, none), ContractError);
}

TEST_CASE("nsp loss hand values") {
  auto m = plain_model(4);
  CHECK(std::abs(nsp_with_bias(*m, 0.0, true) - std::log(2.0)) < 1e-12);
  CHECK(std::abs(nsp_with_bias(*m, 0.0, false) - std::log(2.0)) < 1e-12);
  CHECK(std::abs(nsp_with_bias(*m, 800.0, true)) < 1e-12);
  CHECK(std::abs(nsp_with_bias(*m, -800.0, false)) < 1e-12);
  CHECK(std::abs(nsp_with_bias(*m, std::log(1.0 / 3.0), true) - std::log(4.0)) < 1e-12);
}

TEST_CASE("masked position carries no trace of the original piece") {
  auto m = karlm::testing::toy_model(5);
  const Vocabulary &v = m->vocab();
  double first = 0;
  for (const char *word : {"paris", "berlin", "river", "york"}) {
    std::vector<int> ids = tokenize(std::string("the city of ") + word + " .", v);
    ids[3] = v.mask();
    EncoderInput in = frame_pair(*m, ids, {});
    Tape t;
    EncoderState s = encode(t, *m, in);
    std::vector<MaskedTarget> tg = {{4, v.id("paris")}};
    const double loss = mlm_loss(t, *m, s, tg).value()(0, 0);
    if (std::string(word) == "paris") first = loss;
    CHECK(loss == first);
  }
}

TEST_CASE("loss report total is additive") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    LossReport r;
    r.mlm = uniform01(rng) * 5;
    r.nsp = uniform01(rng);
    for (int j = 0; j < static_cast<int>(uniform_index(rng, 4)); ++j)
      r.el.push_back(uniform01(rng) * 3);
    r.finalize();
    double want = r.mlm + r.nsp;
    for (double e : r.el) want += e;
    CHECK(std::abs(r.total - want) < 1e-12);
  }
}

TEST_CASE("inactive KB layers are skipped") {
  auto m = karlm::testing::toy_model(2);
  EncoderInput in = pair_input(*m, "paris is a city", "");
  m->set_active_kbs(0);
  Tape t;
  EncoderState s = encode(t, *m, in);
  CHECK_FALSE(s.kar[0].has_value());
  CHECK_THROWS_AS(m->set_active_kbs(2), std::out_of_range);
}

}  // TEST_SUITE
