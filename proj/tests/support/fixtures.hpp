// Copyright 2026 The tapd Authors
// SPDX-License-Identifier: Apache-2.0

// Shared helpers for the unit and acceptance tests.

#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <functional>
#include <algorithm>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "tapd/corpus.hpp"
#include "tapd/encoder.hpp"
#include "tapd/prompts.hpp"
#include "tapd/synthetic.hpp"
#include "tapd/tokenizer.hpp"
#include "tapd/trainer.hpp"
#include "tapd/verbalizer.hpp"

namespace tapd::testing {

/// Stub vocabulary covering a split plus the built-in pattern literals.
inline std::shared_ptr<const Tokenizer> tokenizer_for(const corpus::SplitSpec& split, std::size_t max_size = 4096) {
  std::vector<std::string> texts;
  for (const corpus::Dataset* d : {&split.train, &split.validation, &split.test})
    for (const auto& ex : d->examples()) {
      texts.push_back(ex.text);
      texts.push_back(ex.target);
    }
  const prompts::PatternRegistry reg;
  for (const auto& id : reg.ids())
    for (const auto& seg : reg.get(id).segments())
      if (seg.kind == prompts::SegmentKind::Literal) texts.push_back(seg.literal);
  for (const char* w : {"yes", "maybe", "no"}) texts.emplace_back(w);
  return std::make_shared<const Tokenizer>(Tokenizer::build(texts, max_size));
}

/// Keyword corpus with the validation part carved from train.
inline corpus::SplitSpec keyword_split(std::uint64_t seed = 1) {
  corpus::synthetic::KeywordCorpusOptions o;
  o.seed = seed;
  auto split = corpus::synthetic::keyword_corpus(o);
  auto carved = corpus::split_train_val(split.train, {}, 99);
  split.train = carved.train;
  split.validation = carved.validation;
  return split;
}

/// Small, fast training settings that converge on the keyword corpus.
inline trainer::TrainConfig quick_config(std::size_t epochs = 15) {
  trainer::TrainConfig c;
  c.learning_rate = 1e-2;
  c.batch_size = 16;
  c.max_len = 48;
  c.epochs = epochs;
  c.patience = 4;
  c.d_m = 64;
  c.seed = 5;
  return c;
}

struct StubSetup {
  std::shared_ptr<const Tokenizer> tokenizer;
  std::shared_ptr<const encoder::StubEncoder> base;
};

inline StubSetup stub_setup(const corpus::SplitSpec& split, std::size_t d_h = 16, std::uint64_t seed = 0) {
  StubSetup s;
  s.tokenizer = tokenizer_for(split);
  encoder::StubOptions o;
  o.d_h = d_h;
  o.max_positions = 128;
  o.seed = seed;
  s.base = std::make_shared<const encoder::StubEncoder>(*s.tokenizer, o);
  return s;
}

/// Random examples for rendering fuzz tests: mixed-case words, punctuation,
/// hashtags, digits and accented bytes, with texts from 1 to 200 words.
inline corpus::Dataset fuzz_corpus(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::vector<std::string> words = {"God", "gaps", "#SemST", "evidence", "don't", "vote!", "2016", "a",
                                          "Trump's", "@user", "...", "caf\xc3\xa9", "x-ray", "(yes)", "!!!", "the",
                                          "climate", "rights", "?", "feminism", "unbelievable", "http://t.co/x"};
  std::vector<corpus::StanceExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    corpus::StanceExample ex;
    ex.id = "f" + std::to_string(i);
    const std::size_t target_words = 1 + rng() % 4;
    for (std::size_t w = 0; w < target_words; ++w) ex.target += (w ? " " : "") + words[rng() % words.size()];
    const std::size_t text_words = 1 + rng() % 200;
    for (std::size_t w = 0; w < text_words; ++w) ex.text += (w ? " " : "") + words[rng() % words.size()];
    ex.label = label_at(rng() % 3);
    out.push_back(std::move(ex));
  }
  return corpus::Dataset("fuzz", std::move(out));
}

/// Fresh directory under the system temp path, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("tapd-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Central-difference check of analytic gradients. `loss` must recompute
/// the scalar objective from the current parameter values; `analytic` holds
/// the gradients it is compared with, in parameter order. Up to `samples`
/// entries per tensor are probed. Returns the largest per-tensor relative
/// error ||a - n|| / max(||a|| + ||n||, 1e-5); the floor keeps tensors whose
/// true gradient is zero (e.g. a bias whose contributions cancel across the
/// softmax) from dividing finite-difference round-off by nothing.
inline double gradient_check(const std::vector<encoder::Parameter*>& params, const std::vector<encoder::Matrix>& analytic,
                             const std::function<double()>& loss, std::size_t samples, std::mt19937_64& rng,
                             double step = 1e-5) {
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& value = params[p]->value;
    const auto n = static_cast<std::size_t>(value.size());
    std::vector<std::size_t> picks;
    if (n <= samples) {
      for (std::size_t i = 0; i < n; ++i) picks.push_back(i);
    } else {
      for (std::size_t i = 0; i < samples; ++i) picks.push_back(rng() % n);
    }
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t flat : picks) {
      double& x = value.data()[flat];
      const double saved = x;
      x = saved + step;
      const double up = loss();
      x = saved - step;
      const double down = loss();
      x = saved;
      const double numeric = (up - down) / (2 * step);
      const double a = analytic[p].data()[flat];
      diff += (a - numeric) * (a - numeric);
      na += a * a;
      nn += numeric * numeric;
    }
    const double denom = std::max(std::sqrt(na) + std::sqrt(nn), 1e-5);
    worst = std::max(worst, std::sqrt(diff) / denom);
  }
  return worst;
}

/// One randomly drawn configuration of verbalizer head + stub encoder:
/// widths, pattern, batch, teacher, λ, T and dropout all vary with `rng`.
/// The objective is the summed per-example total loss. Returns the largest
/// relative error of the analytic gradient over all encoder and head tensors.
inline double head_stub_gradient_error(const corpus::SplitSpec& split, const Tokenizer& tokenizer,
                                       std::mt19937_64& rng) {
  const std::size_t d_h = 4 + 2 * (rng() % 3);
  encoder::StubOptions so;
  so.d_h = d_h;
  so.max_positions = 64;
  so.seed = rng();
  encoder::StubEncoder enc(tokenizer, so);
  verbalizer::HeadOptions ho;
  ho.d_h = d_h;
  ho.d_m = 3 + rng() % 10;
  ho.seed = rng();
  verbalizer::VerbalizerHead head(ho);
  // Non-zero biases so their gradients are exercised too.
  std::normal_distribution<double> g(0.0, 0.3);
  for (auto& v : head.mask_bias().value.reshaped()) v = g(rng);
  for (auto& v : head.vt_bias().value.reshaped()) v = g(rng);

  const char* ids[] = {"P1", "P2", "P3"};
  const auto pattern = prompts::PromptPattern::builtin(ids[rng() % 3]);
  const std::size_t n = 1 + rng() % 3;
  std::vector<prompts::PromptInstance> batch;
  std::vector<StanceLabel> gold;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ex = split.train[rng() % split.train.size()];
    batch.push_back(prompts::render(pattern, ex, tokenizer, 40));
    gold.push_back(ex.label);
  }
  const bool with_teacher = rng() % 2 == 0;
  const double lambda = with_teacher ? std::uniform_real_distribution<double>(0.0, 1.0)(rng) : 1.0;
  const double temps[] = {1.0, 2.0, 5.0};
  const double temperature = temps[rng() % 3];
  std::vector<std::optional<std::array<double, 3>>> teacher(n);
  if (with_teacher)
    for (auto& t : teacher) {
      std::array<double, 3> z{g(rng) * 5, g(rng) * 5, g(rng) * 5};
      t = verbalizer::softmax(z, temperature).probs;
    }
  const double dropout = rng() % 2 ? 0.5 : 0.0;
  const std::uint64_t dropout_seed = rng();

  auto loss = [&]() {
    const auto outs = enc.encode(batch);
    Rng drng(dropout_seed);
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto tape = verbalizer::head_forward(outs[i], batch[i], head, dropout, dropout > 0 ? &drng : nullptr);
      total += trainer::logit_loss(tape.logits, gold[i], teacher[i], lambda, temperature).total;
    }
    return total;
  };

  enc.zero_grad();
  for (auto* p : head.parameters()) p->grad.setZero();
  const auto outs = enc.forward_train(batch);
  Rng drng(dropout_seed);
  std::vector<encoder::OutputGrad> grads(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto tape = verbalizer::head_forward(outs[i], batch[i], head, dropout, dropout > 0 ? &drng : nullptr);
    const auto l = trainer::logit_loss(tape.logits, gold[i], teacher[i], lambda, temperature);
    grads[i].hidden = verbalizer::head_backward(tape, l.grad, head);
  }
  enc.backward(grads);

  std::vector<encoder::Parameter*> params = enc.parameters();
  for (auto* p : head.parameters()) params.push_back(p);
  std::vector<encoder::Matrix> analytic;
  for (auto* p : params) analytic.push_back(p->grad);
  return gradient_check(params, analytic, loss, 30, rng);
}

/// Reference softmax written with plain loops.
inline std::array<double, 3> scalar_softmax(const std::array<double, 3>& z, double t) {
  double m = z[0];
  for (double v : z) m = v > m ? v : m;
  std::array<double, 3> e{};
  double sum = 0;
  for (int i = 0; i < 3; ++i) {
    e[i] = std::exp((z[i] - m) / t);
    sum += e[i];
  }
  for (double& v : e) v /= sum;
  return e;
}

}  // namespace tapd::testing
