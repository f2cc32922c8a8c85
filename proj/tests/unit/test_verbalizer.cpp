// Copyright 2026 The tapd Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "support/fixtures.hpp"
#include "tapd/error.hpp"
#include "tapd/verbalizer.hpp"

using namespace tapd;
using namespace tapd::verbalizer;

namespace {

double entropy(const std::array<double, 3>& p) {
  double h = 0;
  for (double v : p)
    if (v > 0) h -= v * std::log(v);
  return h;
}

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

}  // namespace

TEST_CASE("pool_target averages the span rows") {
  Matrix h(3, 2);
  h << 1, 0, 0, 1, 7, 7;
  CHECK(pool_target(h, {0, 2}) == Vector::Constant(2, 0.5));
  CHECK(pool_target(h, {2, 3}) == h.row(2).transpose());
  std::mt19937_64 rng(1);
  const Matrix r = random_matrix(9, 4, rng);
  const Vector got = pool_target(r, {2, 7});
  for (Eigen::Index c = 0; c < 4; ++c) {
    double sum = 0;
    for (Eigen::Index i = 2; i < 7; ++i) sum += r(i, c);
    CHECK(std::abs(got(c) - sum / 5) < 1e-12);
  }
  CHECK_THROWS_AS(pool_target(h, {1, 1}), Error);
  CHECK_THROWS_AS(pool_target(h, {2, 4}), Error);
}

TEST_CASE("target-aware stance vectors concatenate target and stance") {
  Vector ht(2);
  ht << 1, 2;
  Matrix v(3, 2);
  v << 3, 4, 5, 6, 7, 8;
  const auto vts = compose_target_aware(ht, v);
  Vector expected(4);
  expected << 1, 2, 3, 4;
  CHECK(vts[index_of(StanceLabel::Favor)] == expected);
  for (const auto& vt : compose_target_aware(Vector::Zero(2), v)) CHECK(vt.head(2).isZero());
  Vector other(2);
  other << -1, 9;
  const auto a = compose_target_aware(ht, v), b = compose_target_aware(other, v);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a[i].head(2) != b[i].head(2));
    CHECK(a[i].tail(2) == b[i].tail(2));
  }
  CHECK_THROWS_AS(compose_target_aware(Vector::Zero(3), v), Error);
}

TEST_CASE("softmax closed forms and argument checks") {
  const auto u = softmax({0.7, 0.7, 0.7}, 1.0);
  for (double p : u.probs) CHECK(p == doctest::Approx(1.0 / 3).epsilon(1e-15));
  const auto s = softmax({std::log(2.0), 0.0, 0.0}, 1.0);
  CHECK(s.probs[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(s.probs[1] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(s.probs[2] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK_THROWS_AS(softmax({1, 2, 3}, 0.0), Error);
  CHECK_THROWS_AS(softmax({1, NAN, 3}, 1.0), NumericError);
  CHECK_THROWS_AS(softmax({1, INFINITY, 3}, 1.0), NumericError);
  const auto big = softmax({1000.0, 0.0, -1000.0}, 1.0);
  CHECK(big.probs[0] == 1.0);
  CHECK(std::isfinite(big.probs[2]));
}

TEST_CASE("temperature properties over random logit triples") {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> g(0.0, 3.0);
  const double temps[] = {0.5, 1.0, 2.0, 5.0, 10.0};
  for (int trial = 0; trial < 1000; ++trial) {
    const std::array<double, 3> z{g(rng), g(rng), g(rng)};
    double last_entropy = -1;
    const StanceLabel arg = softmax(z, 1.0).argmax();
    for (double t : temps) {
      const auto d = softmax(z, t);
      CHECK(std::abs(d.probs[0] + d.probs[1] + d.probs[2] - 1.0) < 1e-6);
      const double h = entropy(d.probs);
      CHECK(h >= last_entropy - 1e-12);
      last_entropy = h;
      CHECK(d.argmax() == arg);
    }
  }
}

TEST_CASE("argmax breaks ties towards the earlier label") {
  StanceDistribution d;
  d.probs = {0.4, 0.4, 0.2};
  CHECK(d.argmax() == StanceLabel::Favor);
  d.probs = {0.2, 0.4, 0.4};
  CHECK(d.argmax() == StanceLabel::None);
  d.probs = {0.1, 0.2, 0.7};
  CHECK(d.argmax() == StanceLabel::Against);
}

TEST_CASE("head initialisation is seeded and shaped") {
  HeadOptions o;
  o.d_h = 5;
  o.d_m = 7;
  o.seed = 3;
  const VerbalizerHead a(o), b(o);
  CHECK(a.d_h() == 5);
  CHECK(a.d_m() == 7);
  CHECK(a.stance_vectors() == b.stance_vectors());
  CHECK(a.vt_weight().value.rows() == 7);
  CHECK(a.vt_weight().value.cols() == 10);
  CHECK(a.mask_bias().value.isZero());
  o.seed = 4;
  CHECK(VerbalizerHead(o).stance_vectors() != a.stance_vectors());
  VerbalizerHead c(o);
  CHECK_THROWS_AS(c.set_stance_vectors(Matrix::Zero(2, 5)), Error);
}

TEST_CASE("score matches a scalar reimplementation at temperature 2") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    HeadOptions o;
    o.d_h = 6;
    o.d_m = 9;
    o.seed = rng();
    VerbalizerHead head(o);
    head.mask_bias().value = random_matrix(9, 1, rng);
    head.vt_bias().value = random_matrix(9, 1, rng);
    const Vector hm = random_matrix(6, 1, rng), ht = random_matrix(6, 1, rng);
    const auto vts = compose_target_aware(ht, head.stance_vectors());
    const auto got = score(hm, vts, head, 2.0);

    const Matrix& wm = head.mask_weight().value;
    const Matrix& wv = head.vt_weight().value;
    std::array<double, 3> logits{};
    for (int i = 0; i < 3; ++i) {
      double dot = 0;
      for (int r = 0; r < 9; ++r) {
        double pm = head.mask_bias().value(r, 0);
        for (int c = 0; c < 6; ++c) pm += wm(r, c) * hm(c);
        double pv = head.vt_bias().value(r, 0);
        for (int c = 0; c < 6; ++c) pv += wv(r, c) * ht(c);
        for (int c = 0; c < 6; ++c) pv += wv(r, 6 + c) * head.stance_vectors()(i, c);
        dot += pm * pv;
      }
      logits[i] = dot;
    }
    const auto expected = testing::scalar_softmax(logits, 2.0);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(got.probs[i] - expected[i]) < 1e-9);
    CHECK(got.temperature == 2.0);
  }
}

TEST_CASE("equal stance vectors give a uniform distribution resolved to Favor") {
  HeadOptions o;
  o.d_h = 4;
  o.d_m = 5;
  VerbalizerHead head(o);
  Matrix same(3, 4);
  same.rowwise() = head.stance_vectors().row(0);
  head.set_stance_vectors(same);
  std::mt19937_64 rng(3);
  const Vector hm = random_matrix(4, 1, rng), ht = random_matrix(4, 1, rng);
  const auto d = score(hm, compose_target_aware(ht, head.stance_vectors()), head, 1.0);
  for (double p : d.probs) CHECK(p == doctest::Approx(1.0 / 3).epsilon(1e-12));
  CHECK(d.argmax() == StanceLabel::Favor);
}

TEST_CASE("classify agrees with the argmax of its distribution") {
  const auto split = testing::keyword_split();
  const auto stub = testing::stub_setup(split, 8);
  HeadOptions o;
  o.d_h = 8;
  o.d_m = 6;
  const VerbalizerHead head(o);
  for (std::size_t i = 0; i < 20; ++i) {
    const auto inst = prompts::render(prompts::PromptPattern::builtin("P3"), split.test[i], *stub.tokenizer, 48);
    const auto [label, dist] = classify(inst, *stub.base, head);
    CHECK(label == dist.argmax());
    const auto out = stub.base->encode(std::span(&inst, 1));
    const Vector hm = out[0].hidden.row(static_cast<Eigen::Index>(inst.mask_index));
    const auto direct = score(hm, compose_target_aware(pool_target(out[0].hidden, inst.target_span),
                                                       head.stance_vectors()), head, 1.0);
    for (int k = 0; k < 3; ++k) CHECK(direct.probs[k] == doctest::Approx(dist.probs[k]).epsilon(1e-14));
  }
}

TEST_CASE("dropout is inverted and reproducible") {
  const auto split = testing::keyword_split();
  const auto stub = testing::stub_setup(split, 8);
  HeadOptions o;
  o.d_h = 8;
  o.d_m = 6;
  const VerbalizerHead head(o);
  const auto inst = prompts::render(prompts::PromptPattern::builtin("P1"), split.train[0], *stub.tokenizer, 48);
  const auto out = stub.base->encode(std::span(&inst, 1));
  Rng a(5), b(5);
  const auto ta = head_forward(out[0], inst, head, 0.5, &a);
  const auto tb = head_forward(out[0], inst, head, 0.5, &b);
  CHECK(ta.logits == tb.logits);
  for (Eigen::Index i = 0; i < ta.mask_keep.size(); ++i) CHECK((ta.mask_keep(i) == 0.0 || ta.mask_keep(i) == 2.0));
  const auto plain = head_forward(out[0], inst, head, 0.5, nullptr);
  CHECK(plain.mask_keep == Vector::Ones(8));
}

TEST_CASE("head plus stub gradients match central differences") {
  const auto split = testing::keyword_split();
  const auto tok = testing::tokenizer_for(split);
  std::mt19937_64 rng(77);
  for (int config = 0; config < 20; ++config) {
    const double err = testing::head_stub_gradient_error(split, *tok, rng);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("fixed verbalizer: uniform, closed form and selection oracle") {
  const auto split = testing::keyword_split();
  const auto stub = testing::stub_setup(split, 8);
  auto enc = stub.base->clone();
  auto state = enc->state();
  const encoder::LabelWords words{stub.tokenizer->id("yes"), stub.tokenizer->id("maybe"), stub.tokenizer->id("no")};
  Matrix& emb = state.tensors.at("encoder/embedding");
  Matrix& bias = state.tensors.at("encoder/output_bias");
  for (TokenId w : words) emb.row(w).setZero();
  enc->load_state(state);
  std::mt19937_64 rng(9);
  const Vector h = random_matrix(8, 1, rng);
  for (double p : fixed_verbalizer_score(h, words, *enc).probs) CHECK(p == doctest::Approx(1.0 / 3).epsilon(1e-14));

  bias(0, words[2]) = 10.0;
  enc->load_state(state);
  const auto d = fixed_verbalizer_score(h, words, *enc);
  CHECK(d.probs[2] == doctest::Approx(std::exp(10.0) / (std::exp(10.0) + 2)).epsilon(1e-12));

  for (int trial = 0; trial < 20; ++trial) {
    const Vector hr = random_matrix(8, 1, rng);
    const Vector all = stub.base->token_output_scores(hr);
    const auto expected = testing::scalar_softmax({all(words[0]), all(words[1]), all(words[2])}, 1.0);
    const auto got = fixed_verbalizer_score(hr, words, *stub.base);
    for (int k = 0; k < 3; ++k) CHECK(std::abs(got.probs[k] - expected[k]) < 1e-12);
  }
}
