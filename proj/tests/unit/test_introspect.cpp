// Copyright 2026 The tapd Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <sstream>

#include "support/fixtures.hpp"
#include "tapd/error.hpp"
#include "tapd/introspect.hpp"

using namespace tapd;
using namespace tapd::introspect;

namespace {

struct World {
  corpus::SplitSpec split = testing::keyword_split();
  testing::StubSetup stub = testing::stub_setup(split, 8);
  trainer::TrainConfig config = [] {
    auto c = testing::quick_config(2);
    c.d_m = 12;
    return c;
  }();
  std::shared_ptr<const trainer::Model> model;
  VocabularyFilter filter = VocabularyFilter::from_dataset(split.train, *stub.tokenizer);

  World() {
    const prompts::PatternRegistry reg;
    trainer::Stage s;
    s.seed = 3;
    s.model = trainer::base_model_factory(stub.tokenizer, stub.base, config)(reg.get("P1"), s.seed);
    model = trainer::train_stage(std::move(s), split, config).model;
  }
};

/// Projected similarity of every filtered word, written with explicit loops.
std::vector<std::pair<double, TokenId>> brute_force_scores(const trainer::Model& m, const std::string& target,
                                                           StanceLabel label, const std::vector<TokenId>& ids,
                                                           std::span<const corpus::StanceExample> context) {
  const auto& head = m.head;
  const auto d_h = static_cast<Eigen::Index>(head.d_h());
  const auto d_m = static_cast<Eigen::Index>(head.d_m());
  std::vector<double> ht(static_cast<std::size_t>(d_h), 0.0);
  for (const auto& ex : context) {
    const auto inst = prompts::render(m.pattern, ex, *m.tokenizer, m.max_len);
    const auto h = m.encoder->encode(std::span(&inst, 1))[0].hidden;
    for (Eigen::Index c = 0; c < d_h; ++c) {
      double sum = 0;
      for (std::size_t r = inst.target_span.begin; r < inst.target_span.end; ++r) sum += h(static_cast<Eigen::Index>(r), c);
      ht[static_cast<std::size_t>(c)] += sum / static_cast<double>(inst.target_span.end - inst.target_span.begin) /
                                         static_cast<double>(context.size());
    }
  }
  const auto& wv = head.vt_weight().value;
  const auto& bv = head.vt_bias().value;
  const auto& wm = head.mask_weight().value;
  const auto& bm = head.mask_bias().value;
  const auto& stance = head.stance_vectors();
  std::vector<double> vt(static_cast<std::size_t>(d_m));
  for (Eigen::Index r = 0; r < d_m; ++r) {
    double s = bv(r, 0);
    for (Eigen::Index c = 0; c < d_h; ++c)
      s += wv(r, c) * ht[static_cast<std::size_t>(c)] + wv(r, d_h + c) * stance(static_cast<Eigen::Index>(index_of(label)), c);
    vt[static_cast<std::size_t>(r)] = s;
  }
  std::vector<std::pair<double, TokenId>> out;
  for (TokenId id : ids) {
    const auto e = m.encoder->input_embeddings(std::vector<TokenId>{id});
    double score = 0;
    for (Eigen::Index r = 0; r < d_m; ++r) {
      double pm = bm(r, 0);
      for (Eigen::Index c = 0; c < d_h; ++c) pm += wm(r, c) * e(0, c);
      score += pm * vt[static_cast<std::size_t>(r)];
    }
    out.push_back({score, id});
  }
  (void)target;
  return out;
}

}  // namespace

TEST_CASE("vocabulary filters are sorted, unique and nonempty") {
  const VocabularyFilter f({5, 3, 5, 9});
  CHECK(f.ids() == std::vector<TokenId>{3, 5, 9});
  CHECK(f.restrict_to(6).ids() == std::vector<TokenId>{3, 5});
  CHECK_THROWS_AS(f.restrict_to(2), Error);
  CHECK_THROWS_AS(VocabularyFilter({}), Error);
  World w;
  for (TokenId id : w.filter.ids()) CHECK_FALSE(w.stub.tokenizer->is_special(id));
}

TEST_CASE("top stance words match a brute-force scan") {
  World w;
  const auto& targets = w.split.train.targets();
  for (const auto& target : targets) {
    const auto context = w.split.train.filter_target(target);
    for (StanceLabel label : kAllLabels) {
      auto oracle = brute_force_scores(*w.model, target, label, w.filter.ids(), context.examples());
      std::sort(oracle.begin(), oracle.end(),
                [](const auto& a, const auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
      const auto top1 = nearest_words_for_stance(*w.model, target, label, 1, w.filter, context.examples());
      REQUIRE(top1.size() == 1);
      CHECK(top1[0].id == oracle[0].second);
      CHECK(top1[0].score == doctest::Approx(oracle[0].first).epsilon(1e-10));
      const auto top10 = nearest_words_for_stance(*w.model, target, label, 10, w.filter, context.examples());
      REQUIRE(top10.size() == 10);
      for (std::size_t i = 0; i < 10; ++i) CHECK(top10[i].id == oracle[i].second);
      for (std::size_t i = 1; i < 10; ++i) CHECK(top10[i - 1].score >= top10[i].score);
    }
  }
}

TEST_CASE("raw space ranks by the plain stance vector") {
  World w;
  const auto got = nearest_words_for_stance(*w.model, "x", StanceLabel::Against, 5, w.filter, {}, StanceSpace::Raw);
  const auto stance = w.model->head.stance_vectors().row(2);
  std::vector<std::pair<double, TokenId>> oracle;
  for (TokenId id : w.filter.ids())
    oracle.push_back({w.model->encoder->input_embeddings(std::vector<TokenId>{id}).row(0).dot(stance), id});
  std::sort(oracle.begin(), oracle.end(),
            [](const auto& a, const auto& b) { return a.first != b.first ? a.first > b.first : a.second < b.second; });
  for (std::size_t i = 0; i < 5; ++i) CHECK(got[i].id == oracle[i].second);
}

TEST_CASE("k saturates, a single-word filter returns that word, k = 0 is an error") {
  World w;
  const auto target = w.split.train.targets().front();
  const auto all = nearest_words_for_stance(*w.model, target, StanceLabel::Favor, 100000, w.filter);
  CHECK(all.size() == w.filter.size());
  const TokenId only = w.filter.ids()[3];
  const auto one = nearest_words_for_stance(*w.model, target, StanceLabel::Favor, 5, VocabularyFilter({only}));
  REQUIRE(one.size() == 1);
  CHECK(one[0].id == only);
  CHECK(one[0].token == w.stub.tokenizer->token(only));
  CHECK_THROWS_AS(nearest_words_for_stance(*w.model, target, StanceLabel::Favor, 0, w.filter), Error);
}

TEST_CASE("stance words need a target-aware verbalizer") {
  World w;
  auto fixed = w.model->clone();
  fixed.head_kind = trainer::HeadKind::Fixed;
  CHECK_THROWS_AS(nearest_words_for_stance(fixed, "x", StanceLabel::Favor, 3, w.filter), Error);
}

TEST_CASE("mask word is the best filtered output score") {
  World w;
  for (std::size_t i = 0; i < 10; ++i) {
    const auto& ex = w.split.test[i];
    const auto got = nearest_word_for_mask(*w.model, ex, w.filter);
    const auto inst = prompts::render(w.model->pattern, ex, *w.stub.tokenizer, w.model->max_len);
    const auto h = w.model->encoder->encode(std::span(&inst, 1))[0].hidden;
    const encoder::Vector all = w.model->encoder->token_output_scores(h.row(static_cast<Eigen::Index>(inst.mask_index)));
    TokenId best = -1;
    double best_score = -1e300;
    for (TokenId id : w.filter.ids())
      if (all(id) > best_score) best_score = all(id), best = id;
    CHECK(got.id == best);
    CHECK(got.score == best_score);
  }
}

TEST_CASE("subword pieces are glued for display") {
  const std::vector<ScoredWord> words = {{1, "un", 0}, {2, "##aff", 0}, {3, "##able", 0}, {4, "fox", 0}};
  CHECK(merge_subwords(words) == std::vector<std::string>{"unaffable", "fox"});
  const std::vector<ScoredWord> leading = {{1, "##s", 0}, {2, "cat", 0}};
  CHECK(merge_subwords(leading) == std::vector<std::string>{"s", "cat"});
  CHECK(merge_subwords(std::vector<ScoredWord>{}).empty());
}

TEST_CASE("analysis tables have one row per target and per example") {
  World w;
  const auto table = stance_word_table(*w.model, w.split.train, 4, w.filter);
  REQUIRE(table.rows.size() == w.split.train.targets().size());
  for (const auto& r : table.rows) {
    CHECK(r.favor.size() == 4);
    CHECK(r.against.size() == 4);
    CHECK(r.none.size() == 4);
  }
  const auto text = render(table);
  CHECK(std::count(text.begin(), text.end(), '\n') == static_cast<long>(table.rows.size()) + 1);
  CHECK(to_json(table).size() == table.rows.size());

  const auto ex = std::span(w.split.test.examples()).first(6);
  const auto rows = mask_word_rows(*w.model, ex, w.filter);
  REQUIRE(rows.size() == 6);
  const auto preds = trainer::predict(*w.model, ex);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(rows[i].example_id == ex[i].id);
    CHECK(rows[i].predicted == preds[i].label);
  }
  const auto rendered = render(rows);
  CHECK(std::count(rendered.begin(), rendered.end(), '\n') == 7);
  CHECK(to_json(rows)[0]["gold"] == std::string(to_string(ex[0].label)));
}
