// Copyright 2026 The tapd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tapd/label.hpp"

namespace tapd::corpus {

struct StanceExample {
  std::string id;
  std::string target;
  std::string text;
  StanceLabel label = StanceLabel::None;

  friend bool operator==(const StanceExample&, const StanceExample&) = default;
};

/// An ordered collection of examples. Construction validates the example
/// invariants (non-empty target and text, unique ids); the target list keeps
/// first-appearance order so iteration over strata is deterministic.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::string name, std::vector<StanceExample> examples);

  const std::string& name() const { return name_; }
  void set_name(std::string name) { name_ = std::move(name); }

  std::span<const StanceExample> examples() const { return examples_; }
  const StanceExample& operator[](std::size_t i) const { return examples_[i]; }
  const std::vector<std::string>& targets() const { return targets_; }
  std::size_t size() const { return examples_.size(); }
  bool empty() const { return examples_.empty(); }

  std::size_t count(std::string_view target, StanceLabel label) const;
  std::size_t count(std::string_view target) const;
  std::size_t count(StanceLabel label) const;

  /// Examples whose target equals `target`, in source order.
  Dataset filter_target(std::string_view target) const;

  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.name_ == b.name_ && a.examples_ == b.examples_;
  }

 private:
  std::string name_;
  std::vector<StanceExample> examples_;
  std::vector<std::string> targets_;
};

/// Concatenates datasets; ids must stay unique.
Dataset concat(std::string name, std::span<const Dataset> parts);

enum class Format { SemevalTsv, UkpTsv, GenericCsv };

Format parse_format(std::string_view name);
std::string_view to_string(Format format);

/// Parses a whole file. Malformed rows, unknown labels, duplicate ids and
/// empty input raise ParseError carrying the offending line number.
Dataset load_dataset(const std::filesystem::path& path, Format format);
Dataset parse_dataset(std::string_view content, Format format, const std::string& name);

struct SplitSpec {
  std::string name;
  Dataset train;
  Dataset validation;
  Dataset test;
  std::string provenance;
  std::uint64_t seed = 0;
};

/// Reads a ukp-tsv file and partitions rows by its `set` column.
SplitSpec load_ukp_splits(const std::filesystem::path& path);
SplitSpec parse_ukp_splits(std::string_view content, const std::string& name);

void write_generic_csv(std::ostream& out, const Dataset& dataset);
void save_generic_csv(const std::filesystem::path& path, const Dataset& dataset);

struct SplitRatio {
  unsigned train = 5;
  unsigned validation = 1;
};

/// Splits `dataset` into train and validation parts. In stratified mode each
/// (target, label) stratum is divided separately, giving it round-half-up of
/// n * validation / (train + validation) validation members; strata smaller
/// than train + validation are pooled and split together, and the pooled
/// strata are listed in the provenance. Member order follows the source.
SplitSpec split_train_val(const Dataset& dataset, SplitRatio ratio, std::uint64_t seed,
                          bool stratified = true);

/// Draws k examples uniformly without replacement from every (target, label)
/// stratum. A stratum with fewer than k gives all it has, and the missing
/// examples are drawn from the same target's other labels, one at a time in
/// label order, so every target still contributes 3k when it can. Stratum
/// counts depend only on k and the corpus, never on the seed. Shortfalls are
/// recorded in the returned dataset's name.
Dataset sample_few_shot(const Dataset& train, std::size_t k, std::uint64_t seed);

/// Train on every source example, test on every destination example. Both
/// inputs must hold exactly one target.
SplitSpec make_cross_target_task(const Dataset& source, const Dataset& destination);

/// Short code for a target ("Feminist Movement" -> "FM"). Known corpus
/// targets use their customary codes; anything else falls back to initials.
std::string target_abbreviation(std::string_view target);

/// Resolves a user-supplied target name or code against `targets`.
/// Throws Error listing the available targets when nothing matches.
std::string resolve_target(std::string_view name, const std::vector<std::string>& targets);

}  // namespace tapd::corpus
