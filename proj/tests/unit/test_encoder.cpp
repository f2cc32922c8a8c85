// Copyright 2026 The tapd Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "support/fixtures.hpp"
#include "tapd/backends.hpp"
#include "tapd/encoder.hpp"
#include "tapd/error.hpp"

using namespace tapd;
using encoder::Matrix;
using encoder::Vector;

namespace {

struct World {
  corpus::SplitSpec split = testing::keyword_split();
  testing::StubSetup stub = testing::stub_setup(split, 8, 3);
  prompts::PromptPattern pattern = prompts::PromptPattern::builtin("P1");

  prompts::PromptInstance instance(std::size_t i) const {
    return prompts::render(pattern, split.train[i], *stub.tokenizer, 48);
  }
};

/// The stub forward pass written with explicit loops over a state dict.
Matrix reference_hidden(const encoder::StateDict& s, const std::vector<TokenId>& ids) {
  const Matrix& emb = s.tensors.at("encoder/embedding");
  const Matrix& pos = s.tensors.at("encoder/positions");
  const Matrix& wq = s.tensors.at("encoder/query");
  const Matrix& wk = s.tensors.at("encoder/key");
  const Matrix& wv = s.tensors.at("encoder/value");
  const Matrix& wo = s.tensors.at("encoder/out");
  const Matrix& bo = s.tensors.at("encoder/out_bias");
  const std::size_t n = ids.size();
  const auto d = static_cast<std::size_t>(emb.cols());
  auto mat = [](std::size_t r, std::size_t c) { return std::vector<std::vector<double>>(r, std::vector<double>(c, 0.0)); };
  auto x = mat(n, d), q = mat(n, d), k = mat(n, d), v = mat(n, d), c = mat(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) x[i][j] = emb(ids[i], j) + pos(i, j);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t t = 0; t < d; ++t) {
        q[i][j] += x[i][t] * wq(t, j);
        k[i][j] += x[i][t] * wk(t, j);
        v[i][j] += x[i][t] * wv(t, j);
      }
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> a(n);
    double m = -1e300;
    for (std::size_t j = 0; j < n; ++j) {
      double dot = 0;
      for (std::size_t t = 0; t < d; ++t) dot += q[i][t] * k[j][t];
      a[j] = dot / std::sqrt(static_cast<double>(d));
      m = std::max(m, a[j]);
    }
    double z = 0;
    for (double& val : a) z += (val = std::exp(val - m));
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t t = 0; t < d; ++t) c[i][t] += a[j] / z * v[j][t];
  }
  Matrix h(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double u = bo(0, j);
      for (std::size_t t = 0; t < d; ++t) u += c[i][t] * wo(t, j);
      h(i, j) = x[i][j] + std::tanh(u);
    }
  return h;
}

}  // namespace

TEST_CASE("stub hidden states have shape (len, d_h)") {
  World w;
  const auto inst = w.instance(0);
  const auto out = w.stub.base->encode(std::span(&inst, 1));
  REQUIRE(out.size() == 1);
  CHECK(out[0].hidden.rows() == static_cast<Eigen::Index>(inst.token_ids.size()));
  CHECK(out[0].hidden.cols() == static_cast<Eigen::Index>(w.stub.base->spec().d_h));
  CHECK_FALSE(out[0].label_scores.has_value());
}

TEST_CASE("stub forward matches a loop-based reference") {
  World w;
  const auto state = w.stub.base->state();
  for (std::size_t i = 0; i < 5; ++i) {
    const auto inst = w.instance(i);
    const auto out = w.stub.base->encode(std::span(&inst, 1));
    CHECK((out[0].hidden - reference_hidden(state, inst.token_ids)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("inference is deterministic and sensitive to text tokens") {
  World w;
  auto inst = w.instance(0);
  const auto a = w.stub.base->encode(std::span(&inst, 1));
  const auto b = w.stub.base->encode(std::span(&inst, 1));
  CHECK(a[0].hidden == b[0].hidden);
  auto changed = inst;
  TokenId& t = changed.token_ids[changed.text_span.begin];
  t = t == w.stub.tokenizer->id("music") ? w.stub.tokenizer->id("story") : w.stub.tokenizer->id("music");
  const auto c = w.stub.base->encode(std::span(&changed, 1));
  const Vector ha = a[0].hidden.row(static_cast<Eigen::Index>(inst.mask_index));
  const Vector hc = c[0].hidden.row(static_cast<Eigen::Index>(inst.mask_index));
  CHECK((ha - hc).norm() > 1e-9);
}

TEST_CASE("instances longer than max_positions are rejected") {
  World w;
  encoder::StubOptions o;
  o.d_h = 4;
  o.max_positions = 8;
  const encoder::StubEncoder small(*w.stub.tokenizer, o);
  const auto inst = w.instance(0);
  CHECK_THROWS_AS(small.encode(std::span(&inst, 1)), Error);
}

TEST_CASE("output scores: zero vector gives the bias, unit rows self-select, scan oracle") {
  World w;
  auto enc = std::make_unique<encoder::StubEncoder>(*w.stub.tokenizer, encoder::StubOptions{8, 64, 1, 0});
  auto state = enc->state();
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  Matrix& bias = state.tensors.at("encoder/output_bias");
  for (Eigen::Index i = 0; i < bias.cols(); ++i) bias(0, i) = g(rng);
  enc->load_state(state);
  const Vector zero = Vector::Zero(8);
  CHECK((enc->token_output_scores(zero) - bias.row(0).transpose()).cwiseAbs().maxCoeff() == 0.0);

  // Unit-norm embeddings and no bias: row k is its own best match.
  Matrix& emb = state.tensors.at("encoder/embedding");
  emb.rowwise().normalize();
  bias.setZero();
  enc->load_state(state);
  for (TokenId k : {5, 17, 42}) {
    Eigen::Index best = 0;
    enc->token_output_scores(emb.row(k).transpose()).maxCoeff(&best);
    CHECK(best == k);
  }

  for (int trial = 0; trial < 20; ++trial) {
    Vector h(8);
    for (auto& v : h) v = g(rng);
    const Vector scores = enc->token_output_scores(h);
    Eigen::Index best = 0;
    double best_score = -1e300;
    for (Eigen::Index r = 0; r < emb.rows(); ++r) {
      double s = 0;
      for (Eigen::Index c = 0; c < 8; ++c) s += emb(r, c) * h(c);
      if (s > best_score) best_score = s, best = r;
    }
    Eigen::Index got = 0;
    scores.maxCoeff(&got);
    CHECK(got == best);
  }
}

TEST_CASE("label scores equal the output scores of the label words") {
  World w;
  const auto inst = w.instance(1);
  const encoder::LabelWords words{w.stub.tokenizer->id("yes"), w.stub.tokenizer->id("maybe"),
                                  w.stub.tokenizer->id("no")};
  const auto out = w.stub.base->encode(std::span(&inst, 1), &words);
  REQUIRE(out[0].label_scores.has_value());
  const Vector all = w.stub.base->token_output_scores(out[0].hidden.row(static_cast<Eigen::Index>(inst.mask_index)));
  for (std::size_t j = 0; j < 3; ++j) CHECK((*out[0].label_scores)[j] == doctest::Approx(all(words[j])).epsilon(1e-12));
}

TEST_CASE("stub backward matches central differences") {
  World w;
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g;
  const encoder::LabelWords words{w.stub.tokenizer->id("yes"), w.stub.tokenizer->id("maybe"),
                                  w.stub.tokenizer->id("no")};
  for (int config = 0; config < 3; ++config) {
    auto enc = w.stub.base->clone();
    std::vector<prompts::PromptInstance> batch = {w.instance(static_cast<std::size_t>(config)),
                                                  w.instance(static_cast<std::size_t>(config) + 7)};
    std::vector<encoder::OutputGrad> grads;
    for (const auto& inst : batch) {
      encoder::OutputGrad og;
      og.hidden = Matrix(static_cast<Eigen::Index>(inst.token_ids.size()), 8);
      for (Eigen::Index i = 0; i < og.hidden.size(); ++i) og.hidden.data()[i] = g(rng);
      og.label_scores = {g(rng), g(rng), g(rng)};
      grads.push_back(og);
    }
    auto loss = [&]() {
      const auto outs = enc->encode(batch, &words);
      double total = 0;
      for (std::size_t b = 0; b < outs.size(); ++b) {
        total += (outs[b].hidden.array() * grads[b].hidden.array()).sum();
        for (std::size_t j = 0; j < 3; ++j) total += (*outs[b].label_scores)[j] * grads[b].label_scores[j];
      }
      return total;
    };
    enc->zero_grad();
    enc->forward_train(batch, &words);
    enc->backward(grads);
    std::vector<Matrix> analytic;
    for (auto* p : enc->parameters()) analytic.push_back(p->grad);
    CHECK(testing::gradient_check(enc->parameters(), analytic, loss, 40, rng) < 1e-6);
  }
}

TEST_CASE("clone and state round-trip reproduce outputs") {
  World w;
  auto copy = w.stub.base->clone();
  const auto inst = w.instance(2);
  CHECK(copy->encode(std::span(&inst, 1))[0].hidden == w.stub.base->encode(std::span(&inst, 1))[0].hidden);
  auto other = std::make_unique<encoder::StubEncoder>(*w.stub.tokenizer, encoder::StubOptions{8, 128, 99, 0});
  CHECK(other->encode(std::span(&inst, 1))[0].hidden != w.stub.base->encode(std::span(&inst, 1))[0].hidden);
  other->load_state(w.stub.base->state());
  CHECK(other->encode(std::span(&inst, 1))[0].hidden == w.stub.base->encode(std::span(&inst, 1))[0].hidden);
  auto bad = w.stub.base->state();
  bad.tensors.erase("encoder/query");
  CHECK_THROWS_AS(other->load_state(bad), Error);
}

TEST_CASE("restore_encoder rebuilds a stub from its state") {
  World w;
  const auto restored = encoder::restore_encoder(*w.stub.tokenizer, w.stub.base->state(), ".");
  const auto inst = w.instance(3);
  CHECK(restored->encode(std::span(&inst, 1))[0].hidden == w.stub.base->encode(std::span(&inst, 1))[0].hidden);
}

TEST_CASE("backend specs parse") {
  CHECK(encoder::BackendSpec::parse("stub").kind == encoder::BackendSpec::Kind::Stub);
  const auto p = encoder::BackendSpec::parse("pretrained:bert-base-uncased");
  CHECK(p.kind == encoder::BackendSpec::Kind::Pretrained);
  CHECK(p.identifier == "bert-base-uncased");
  CHECK(p.str() == "pretrained:bert-base-uncased");
  CHECK_THROWS_AS(encoder::BackendSpec::parse("pretrained:"), Error);
  CHECK_THROWS_AS(encoder::BackendSpec::parse("gpu"), Error);
}

TEST_CASE("encoder spec validation") {
  encoder::EncoderSpec s;
  s.d_h = 4;
  s.vocab_size = 10;
  s.mask_token_id = 1;
  s.sep_token_id = 2;
  s.start_token_id = 3;
  CHECK_NOTHROW(s.validate());
  s.sep_token_id = 1;
  CHECK_THROWS_AS(s.validate(), Error);
  s.sep_token_id = 20;
  CHECK_THROWS_AS(s.validate(), Error);
}
