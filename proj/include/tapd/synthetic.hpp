// Copyright 2026 The tapd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tapd/corpus.hpp"

namespace tapd::corpus::synthetic {

/// Marker-word corpus: every text is filler words plus exactly one marker
/// word that is unique to its (target, label) pair, so the marker alone
/// determines the stance.
struct KeywordCorpusOptions {
  std::size_t num_targets = 3;
  std::size_t train_size = 300;
  std::size_t test_size = 150;
  std::size_t min_words = 5;
  std::size_t max_words = 10;
  std::uint64_t seed = 1;
};

SplitSpec keyword_corpus(const KeywordCorpusOptions& options);

/// The marker word that decides `label` for target number `target_index`.
std::string marker_word(std::size_t target_index, StanceLabel label);

/// Corpus with the per-target and per-label example counts of the SemEval
/// Task 6A official train/test files (train 2,914; test 1,249). Texts are
/// synthetic marker-word sentences.
SplitSpec semeval_shaped(std::uint64_t seed);

/// Corpus with the per-target train/val/test counts of the UKP sentential
/// argument corpus (18,341 / 2,042 / 5,109).
SplitSpec ukp_shaped(std::uint64_t seed);

struct TargetShape {
  std::string target;
  std::size_t train = 0;
  double train_favor_pct = 0, train_against_pct = 0;
  std::size_t validation = 0;
  double val_favor_pct = 0, val_against_pct = 0;
  std::size_t test = 0;
  double test_favor_pct = 0, test_against_pct = 0;
};

const std::vector<TargetShape>& semeval_table();
const std::vector<TargetShape>& ukp_table();

}  // namespace tapd::corpus::synthetic
