// Copyright 2026 The tapd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tapd/corpus.hpp"
#include "tapd/trainer.hpp"

namespace tapd::introspect {

/// Sorted, duplicate-free set of token ids words may be drawn from.
class VocabularyFilter {
 public:
  explicit VocabularyFilter(std::vector<TokenId> ids);

  /// Non-special tokens occurring in the dataset's texts.
  static VocabularyFilter from_dataset(const corpus::Dataset& dataset, const Tokenizer& tokenizer);

  const std::vector<TokenId>& ids() const { return ids_; }
  std::size_t size() const { return ids_.size(); }

  /// Ids below `vocab_size`. Throws Error when nothing is left.
  VocabularyFilter restrict_to(std::size_t vocab_size) const;

 private:
  std::vector<TokenId> ids_;
};

struct ScoredWord {
  TokenId id = -1;
  std::string token;
  double score = 0.0;

  bool operator==(const ScoredWord&) const = default;
};

/// Where stance vectors and words are compared.
enum class StanceSpace {
  /// proj_mask(word embedding) · proj_vt(VT): the space of the scoring dot product.
  Projected,
  /// word embedding · the raw stance vector of the label.
  Raw,
};

/// Top-k filtered words by similarity to the target-aware stance vector of
/// (target, label). The target representation is pooled from the model's
/// pattern rendered over `context` (examples of that target) and averaged;
/// with no context the target itself stands in as the text. Ties go to the
/// lower token id. Throws Error for k = 0 or a fixed-verbalizer model.
std::vector<ScoredWord> nearest_words_for_stance(const trainer::Model& model, const std::string& target,
                                                 StanceLabel label, std::size_t k, const VocabularyFilter& filter,
                                                 std::span<const corpus::StanceExample> context = {},
                                                 StanceSpace space = StanceSpace::Projected);

/// Filtered word with the highest masked-LM score at the mask position.
/// Throws UnsupportedError when the backend has no output embedding.
ScoredWord nearest_word_for_mask(const trainer::Model& model, const corpus::StanceExample& example,
                                 const VocabularyFilter& filter);

/// Display form of a ranked list: a "##" piece is glued to the entry before it.
std::vector<std::string> merge_subwords(std::span<const ScoredWord> words);

struct StanceWordTable {
  struct Row {
    std::string target;
    std::vector<ScoredWord> favor, against, none;
  };
  std::vector<Row> rows;
};

StanceWordTable stance_word_table(const trainer::Model& model, const corpus::Dataset& data, std::size_t k,
                                  const VocabularyFilter& filter, StanceSpace space = StanceSpace::Projected);

struct MaskWordRow {
  std::string example_id;
  std::string target;
  std::string text;
  StanceLabel gold = StanceLabel::None;
  StanceLabel predicted = StanceLabel::None;
  ScoredWord word;
};

std::vector<MaskWordRow> mask_word_rows(const trainer::Model& model, std::span<const corpus::StanceExample> examples,
                                        const VocabularyFilter& filter);

nlohmann::json to_json(const StanceWordTable& table);
nlohmann::json to_json(std::span<const MaskWordRow> rows);
/// Targets as rows; Favor, Against and None columns of comma-joined words.
std::string render(const StanceWordTable& table);
/// One row per example with its text, labels and mask word.
std::string render(std::span<const MaskWordRow> rows);

}  // namespace tapd::introspect
