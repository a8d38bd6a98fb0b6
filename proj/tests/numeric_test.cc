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

#include "doctest.h"
#include "helpers.h"
#include "karlm/gradcheck.h"
#include "karlm/layers.h"
#include "karlm/linalg.h"
#include "karlm/ops.h"

using namespace karlm;
using karlm::testing::mat;
using karlm::testing::max_abs;

namespace {

void set_identity(Linear &l) {
  l.weight->value.setIdentity();
  l.bias->value.setZero();
}

// softmax(q k^T / sqrt(d)) v per head with explicit loops.
Matrix naive_attention(const Matrix &q, const Matrix &k, const Matrix &v, int heads) {
  const int d = static_cast<int>(q.cols()) / heads;
  Matrix out = Matrix::Zero(q.rows(), q.cols());
  for (int h = 0; h < heads; ++h) {
    for (int i = 0; i < q.rows(); ++i) {
      std::vector<double> s(k.rows());
      double best = -1e300;
      for (int j = 0; j < k.rows(); ++j) {
        double dot = 0;
        for (int c = 0; c < d; ++c) dot += q(i, h * d + c) * k(j, h * d + c);
        s[j] = dot / std::sqrt(static_cast<double>(d));
        best = std::max(best, s[j]);
      }
      double z = 0;
      for (double &x : s) z += (x = std::exp(x - best));
      for (int j = 0; j < k.rows(); ++j) {
        for (int c = 0; c < d; ++c) out(i, h * d + c) += s[j] / z * v(j, h * d + c);
      }
    }
  }
  return out;
}

Matrix lin(const Linear &l, const Matrix &x) {
  return (x * l.weight->value).rowwise() + l.bias->value.row(0);
}

}  // namespace

TEST_SUITE("numeric") {

TEST_CASE("matmul identity, hand product and zero") {
  Tape t;
  Matrix a = mat({{1, 2}, {3, 4}});
  CHECK(matmul(t.constant(Matrix::Identity(2, 2)), t.constant(a)).value() == a);
  CHECK(matmul(t.constant(mat({{1, 2}})), t.constant(mat({{3}, {4}}))).value()(0, 0) ==
        11.0);
  Rng rng(5);
  Matrix b = random_normal(2, 3, 1.0, rng);
  CHECK(matmul(t.constant(Matrix::Zero(4, 2)), t.constant(b)).value() ==
        Matrix::Zero(4, 3));
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tape t;
  try {
    matmul(t.constant(Matrix::Zero(2, 3)), t.constant(Matrix::Zero(4, 5)));
    FAIL("expected DimensionError");
  } catch (const DimensionError &e) {
    const std::string what = e.what();
    CHECK(what.find("(2,3)") != std::string::npos);
    CHECK(what.find("(4,5)") != std::string::npos);
  }
}

TEST_CASE("softmax rows") {
  Tape t;
  Matrix u = softmax_rows(t.constant(mat({{0, 0, 0}}))).value();
  for (int c = 0; c < 3; ++c) CHECK(u(0, c) == doctest::Approx(1.0 / 3).epsilon(1e-15));
  Matrix big = softmax_rows(t.constant(mat({{1000, 1000}}))).value();
  CHECK(big(0, 0) == 0.5);
  CHECK(big(0, 1) == 0.5);
  Matrix p = softmax_rows(t.constant(mat({{1, 2}}))).value();
  // e / (e + e^2) and e^2 / (e + e^2).
  CHECK(std::abs(p(0, 0) - 0.2689414213699951) < 1e-15);
  CHECK(std::abs(p(0, 1) - 0.7310585786300049) < 1e-15);
}

TEST_CASE("softmax rows sum to one and ignore row shifts") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    Tape t;
    Matrix x = random_normal(4, 7, 3.0, rng);
    Matrix y = softmax_rows(t.constant(x)).value();
    for (int r = 0; r < 4; ++r) CHECK(std::abs(y.row(r).sum() - 1.0) < 1e-9);
    Matrix shifted = x;
    for (int r = 0; r < 4; ++r) shifted.row(r).array() += 2.0 * r - 1.5;
    Matrix y2 = softmax_rows(t.constant(shifted)).value();
    CHECK(max_abs(y, y2) < 1e-15);
  }
}

TEST_CASE("attention with one key returns its value row") {
  ParameterSet ps;
  Rng rng(2);
  AttentionParams a = make_attention(ps, "a", 4, 1, 0.5, rng);
  set_identity(a.query);
  set_identity(a.key);
  set_identity(a.value);
  set_identity(a.output);
  Tape t;
  Matrix kv = mat({{0.5, -1, 2, 0.25}});
  Matrix out = multi_head_attention(t, a, t.constant(random_normal(3, 4, 1.0, rng)),
                                    t.constant(kv), t.constant(kv))
                   .value();
  for (int r = 0; r < 3; ++r) CHECK(max_abs(out.row(r), kv) < 1e-15);
}

TEST_CASE("attention matches a loop oracle") {
  Rng rng(8);
  SUBCASE("one head, identity projections") {
    ParameterSet ps;
    AttentionParams a = make_attention(ps, "a", 5, 1, 0.5, rng);
    set_identity(a.query);
    set_identity(a.key);
    set_identity(a.value);
    set_identity(a.output);
    Matrix q = random_normal(2, 5, 1.0, rng), k = random_normal(3, 5, 1.0, rng),
           v = random_normal(3, 5, 1.0, rng);
    Tape t;
    Matrix out = multi_head_attention(t, a, t.constant(q), t.constant(k), t.constant(v)).value();
    CHECK(max_abs(out, naive_attention(q, k, v, 1)) < 1e-10);
  }
  SUBCASE("four heads of width two, random projections") {
    ParameterSet ps;
    AttentionParams a = make_attention(ps, "a", 8, 4, 0.5, rng);
    for (Linear *l : {&a.query, &a.key, &a.value, &a.output}) {
      l->bias->value = random_normal(1, 8, 0.1, rng);
    }
    Matrix q = random_normal(6, 8, 1.0, rng), k = random_normal(5, 8, 1.0, rng);
    Tape t;
    Matrix out = multi_head_attention(t, a, t.constant(q), t.constant(k), t.constant(k)).value();
    Matrix heads = naive_attention(lin(a.query, q), lin(a.key, k), lin(a.value, k), 4);
    CHECK(max_abs(out, lin(a.output, heads)) < 1e-10);
  }
}

TEST_CASE("attention without targets is rejected") {
  ParameterSet ps;
  Rng rng(1);
  AttentionParams a = make_attention(ps, "a", 4, 2, 0.5, rng);
  Tape t;
  CHECK_THROWS_AS(multi_head_attention(t, a, t.constant(Matrix::Zero(2, 4)),
                                       t.constant(Matrix::Zero(0, 4)),
                                       t.constant(Matrix::Zero(0, 4))),
                  NoAttentionTargetsError);
}

TEST_CASE("transformer block keeps shape and permutes with its input") {
  ParameterSet ps;
  Rng rng(4);
  TransformerBlockParams b = make_transformer_block(ps, "b", 16, 4, 32, 0.3, rng);
  Matrix h = random_normal(5, 16, 1.0, rng);
  Tape t;
  Matrix out = transformer_block(t, b, t.constant(h)).value();
  CHECK(out.rows() == 5);
  CHECK(out.cols() == 16);
  const int perm[5] = {3, 0, 4, 1, 2};
  Matrix hp(5, 16), expected(5, 16);
  for (int i = 0; i < 5; ++i) {
    hp.row(i) = h.row(perm[i]);
    expected.row(i) = out.row(perm[i]);
  }
  CHECK(max_abs(transformer_block(t, b, t.constant(hp)).value(), expected) < 1e-12);
  CHECK_THROWS_AS(transformer_block(t, b, t.constant(Matrix::Zero(0, 16))), DimensionError);
  CHECK_THROWS_AS(transformer_block(t, b, t.constant(Matrix::Zero(3, 8))), DimensionError);
}

TEST_CASE("backward of sum(W x) gives x broadcast over rows") {
  ParameterSet ps;
  Parameter &w = ps.add("w", mat({{1, 2, 3}, {4, 5, 6}}));
  Matrix x = mat({{0.5}, {-1}, {2}});
  Tape t;
  Tensor2 loss = sum(matmul(t.parameter(w), t.constant(x)));
  Gradients g(ps);
  t.backward(loss, g);
  for (int r = 0; r < 2; ++r) CHECK(max_abs(g[0].row(r), x.transpose()) == 0.0);
}

TEST_CASE("constant loss yields zero gradients") {
  ParameterSet ps;
  ps.add("w", mat({{1, 2}}));
  Tape t;
  Gradients g(ps);
  t.backward(t.constant(mat({{3.0}})), g);
  CHECK(g[0].isZero(0.0));
}

TEST_CASE("backward on a non-scalar is a contract violation") {
  ParameterSet ps;
  Parameter &w = ps.add("w", mat({{1, 2}}));
  Tape t;
  Gradients g(ps);
  CHECK_THROWS_AS(t.backward(t.parameter(w), g), ContractError);
}

TEST_CASE("every primitive passes finite differences") {
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    ParameterSet ps;
    Parameter &a = ps.add("a", random_normal(3, 4, 1.0, rng));
    Parameter &b = ps.add("b", random_normal(4, 4, 1.0, rng));
    Parameter &g = ps.add("g", random_normal(1, 4, 1.0, rng));
    Parameter &beta = ps.add("beta", random_normal(1, 4, 1.0, rng));
    TransformerBlockParams block = make_transformer_block(ps, "blk", 4, 2, 6, 0.5, rng);
    const Matrix c = random_normal(3, 4, 1.0, rng);
    auto loss = [&](Tape &t) {
      Tensor2 x = matmul(t.parameter(a), t.parameter(b));
      x = layer_norm(add(x, t.constant(c)), t.parameter(g), t.parameter(beta));
      x = transformer_block(t, block, x);
      Tensor2 s = softmax_rows(gelu(x));
      Tensor2 r = relu(sub(x, scale(hadamard(x, x), 0.3)));
      Tensor2 both = concat_cols({slice_cols(s, 0, 2), sigmoid(slice_cols(r, 1, 2))});
      Tensor2 tail = log_softmax_rows(concat_rows({both, slice_rows(x, 1, 1)}));
      std::pair<int, int> cells[2] = {{0, 1}, {3, 2}};
      return add(sum(gather_rows(tail, std::vector<int>{3, 0})),
                 scale(sum(pick(tail, cells)), 2.0));
    };
    GradCheckResult res = check_gradients(ps, loss, {});
    INFO("seed " << seed << " worst " << res.worst_parameter);
    CHECK(res.max_relative_error < 1e-4);
    CHECK(res.coordinates_checked == ps.scalar_count());
  }
}

TEST_CASE("identical tapes give bitwise identical gradients") {
  Rng rng(3);
  ParameterSet ps;
  TransformerBlockParams block = make_transformer_block(ps, "blk", 8, 2, 16, 0.3, rng);
  Matrix h = random_normal(4, 8, 1.0, rng);
  Gradients g1(ps), g2(ps);
  for (Gradients *g : {&g1, &g2}) {
    Tape t;
    t.backward(sum(transformer_block(t, block, t.constant(h))), *g);
  }
  for (int i = 0; i < ps.size(); ++i) CHECK(g1[i] == g2[i]);
}

TEST_CASE("pseudoinverse") {
  CHECK(max_abs(pseudoinverse(Matrix::Identity(4, 4)), Matrix::Identity(4, 4)) < 1e-12);
  Rng rng(9);
  Eigen::HouseholderQR<Matrix> qr(random_normal(6, 3, 1.0, rng));
  Matrix q = qr.householderQ() * Matrix::Identity(6, 3);
  CHECK(max_abs(pseudoinverse(q), q.transpose()) < 1e-12);
  for (int trial = 0; trial < 10; ++trial) {
    Matrix w = random_normal(6, 3, 1.0, rng);
    CHECK(penrose_residual(w, pseudoinverse(w)) < 1e-8);
  }
  Matrix deficient = mat({{1, 2}, {2, 4}, {3, 6}});
  CHECK_THROWS_AS(pseudoinverse(deficient), SingularityError);
}

TEST_CASE("forward outputs stay finite on finite inputs") {
  Rng rng(12);
  ParameterSet ps;
  TransformerBlockParams block = make_transformer_block(ps, "blk", 8, 2, 16, 0.3, rng);
  Tape t;
  Matrix out = transformer_block(t, block, t.constant(random_normal(6, 8, 50.0, rng))).value();
  CHECK(out.allFinite());
  CHECK(softmax_rows(t.constant(mat({{-1e300, 1e300}}))).value().allFinite());
}

}  // TEST_SUITE
