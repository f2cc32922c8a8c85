// Copyright 2026 The tapd Authors
// SPDX-License-Identifier: Apache-2.0

#include "tapd/synthetic.hpp"

#include <array>
#include <cmath>

#include "tapd/random.hpp"

namespace tapd::corpus::synthetic {

namespace {

constexpr std::array<const char*, 40> kFiller = {
    "the",   "a",     "today", "people", "really", "think",  "about", "this",  "again",  "news",
    "world", "some",  "more",  "time",   "still",  "just",   "what",  "where", "many",   "every",
    "new",   "year",  "city",  "friend", "after",  "before", "maybe", "heard", "said",   "story",
    "water", "light", "road",  "paper",  "table",  "music",  "early", "late",  "number", "voice"};

constexpr std::array<const char*, 8> kTargetStems = {"alpha", "bravo", "cobalt", "delta",
                                                     "ember", "fable", "garnet", "harbor"};

constexpr std::array<const char*, 8> kTargetNames = {"Alpha Project", "Bravo Policy",  "Cobalt Plan",  "Delta Law",
                                                     "Ember Program", "Fable Reform", "Garnet Treaty", "Harbor Act"};

std::string make_text(Rng& rng, std::size_t target_index, StanceLabel label, std::size_t min_words,
                      std::size_t max_words) {
  std::uniform_int_distribution<std::size_t> length(min_words, max_words);
  std::uniform_int_distribution<std::size_t> filler(0, kFiller.size() - 1);
  const std::size_t n = length(rng);
  std::uniform_int_distribution<std::size_t> slot(0, n);
  const std::size_t marker_at = slot(rng);
  std::string text;
  for (std::size_t i = 0; i <= n; ++i) {
    if (!text.empty()) text.push_back(' ');
    text += i == marker_at ? marker_word(target_index, label) : std::string(kFiller[filler(rng)]);
  }
  return text;
}

std::size_t pct_count(std::size_t n, double pct) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(n) * pct / 100.0));
}

Dataset shaped_part(const std::vector<TargetShape>& table, std::string_view part, std::uint64_t seed,
                    const std::string& name) {
  Rng rng = substream(seed, std::string("shaped/") + std::string(part));
  std::vector<StanceExample> examples;
  for (std::size_t t = 0; t < table.size(); ++t) {
    const auto& row = table[t];
    std::size_t n = row.train;
    double favor = row.train_favor_pct, against = row.train_against_pct;
    if (part == "val") n = row.validation, favor = row.val_favor_pct, against = row.val_against_pct;
    if (part == "test") n = row.test, favor = row.test_favor_pct, against = row.test_against_pct;
    const std::size_t n_favor = pct_count(n, favor);
    const std::size_t n_against = pct_count(n, against);
    const std::size_t n_none = n - n_favor - n_against;
    const std::array<std::pair<StanceLabel, std::size_t>, 3> counts = {
        {{StanceLabel::Favor, n_favor}, {StanceLabel::Against, n_against}, {StanceLabel::None, n_none}}};
    for (auto [label, count] : counts) {
      for (std::size_t i = 0; i < count; ++i) {
        StanceExample ex;
        ex.id = std::string(part) + "-" + std::to_string(examples.size() + 1);
        ex.target = row.target;
        ex.text = make_text(rng, t, label, 6, 14);
        ex.label = label;
        examples.push_back(std::move(ex));
      }
    }
  }
  return Dataset(name, std::move(examples));
}

}  // namespace

std::string marker_word(std::size_t target_index, StanceLabel label) {
  static constexpr std::array<const char*, 3> suffix = {"yes", "meh", "nope"};
  return std::string(kTargetStems.at(target_index)) + suffix[index_of(label)];
}

SplitSpec keyword_corpus(const KeywordCorpusOptions& options) {
  auto part = [&](std::size_t size, std::string_view which) {
    Rng rng = substream(options.seed, std::string("keyword/") + std::string(which));
    std::vector<StanceExample> examples;
    examples.reserve(size);
    for (std::size_t i = 0; i < size; ++i) {
      const std::size_t t = i % options.num_targets;
      const StanceLabel label = label_at((i / options.num_targets) % kNumLabels);
      StanceExample ex;
      ex.id = std::string(which) + "-" + std::to_string(i + 1);
      ex.target = kTargetNames.at(t);
      ex.text = make_text(rng, t, label, options.min_words, options.max_words);
      ex.label = label;
      examples.push_back(std::move(ex));
    }
    return Dataset("keyword/" + std::string(which), std::move(examples));
  };
  SplitSpec split;
  split.name = "keyword";
  split.train = part(options.train_size, "train");
  split.validation = Dataset("keyword/val", {});
  split.test = part(options.test_size, "test");
  split.provenance = "synthetic marker-word corpus, seed " + std::to_string(options.seed);
  split.seed = options.seed;
  return split;
}

const std::vector<TargetShape>& semeval_table() {
  static const std::vector<TargetShape> table = {
      {"Atheism", 513, 17.93, 59.26, 0, 0, 0, 220, 14.54, 72.73},
      {"Climate Change is a Real Concern", 395, 53.67, 3.80, 0, 0, 0, 169, 72.78, 6.51},
      {"Feminist Movement", 664, 31.63, 49.40, 0, 0, 0, 285, 20.35, 64.21},
      {"Hillary Clinton", 689, 17.13, 57.04, 0, 0, 0, 295, 15.25, 58.31},
      {"Legalization of Abortion", 653, 18.53, 54.36, 0, 0, 0, 280, 16.43, 67.50},
  };
  return table;
}

const std::vector<TargetShape>& ukp_table() {
  static const std::vector<TargetShape> table = {
      {"abortion", 2827, 17.33, 20.91, 315, 17.14, 20.95, 787, 17.28, 20.97},
      {"cloning", 2187, 23.23, 27.62, 243, 23.05, 27.57, 609, 23.32, 27.59},
      {"death penalty", 2627, 12.03, 30.03, 293, 12.97, 30.72, 731, 14.09, 31.74},
      {"gun control", 2404, 23.54, 19.93, 268, 23.51, 19.78, 669, 23.62, 19.88},
      {"marijuana legalization", 1780, 23.71, 25.28, 198, 23.74, 25.25, 497, 23.74, 25.35},
      {"minimum wage", 1778, 23.28, 22.27, 198, 23.23, 22.22, 497, 23.34, 22.33},
      {"nuclear energy", 2573, 16.95, 23.82, 286, 16.78, 23.78, 717, 17.02, 23.85},
      {"school uniforms", 2165, 18.11, 24.25, 241, 18.26, 24.07, 602, 18.11, 24.25},
  };
  return table;
}

SplitSpec semeval_shaped(std::uint64_t seed) {
  SplitSpec split;
  split.name = "semeval-shaped";
  split.train = shaped_part(semeval_table(), "train", seed, "semeval-shaped/train");
  split.validation = Dataset("semeval-shaped/val", {});
  split.test = shaped_part(semeval_table(), "test", seed, "semeval-shaped/test");
  split.provenance = "synthetic, SemEval-2016 Task 6A target/label counts";
  split.seed = seed;
  return split;
}

SplitSpec ukp_shaped(std::uint64_t seed) {
  SplitSpec split;
  split.name = "ukp-shaped";
  split.train = shaped_part(ukp_table(), "train", seed, "ukp-shaped/train");
  split.validation = shaped_part(ukp_table(), "val", seed, "ukp-shaped/val");
  split.test = shaped_part(ukp_table(), "test", seed, "ukp-shaped/test");
  split.provenance = "synthetic, UKP target/split counts";
  split.seed = seed;
  return split;
}

}  // namespace tapd::corpus::synthetic
