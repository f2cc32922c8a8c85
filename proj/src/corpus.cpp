// Copyright 2026 The tapd Authors
// SPDX-License-Identifier: Apache-2.0

#include "tapd/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <array>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>
#include <utility>

#include "tapd/csv.hpp"
#include "tapd/error.hpp"
#include "tapd/random.hpp"

namespace tapd::corpus {

namespace {

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

// Indices of examples grouped by (target, label), strata in first-appearance order.
std::vector<std::vector<std::size_t>> strata_of(const Dataset& dataset) {
  std::vector<std::vector<std::size_t>> strata;
  std::map<std::pair<std::string, std::size_t>, std::size_t> slot;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& ex = dataset[i];
    auto key = std::make_pair(ex.target, index_of(ex.label));
    auto [it, inserted] = slot.emplace(key, strata.size());
    if (inserted) strata.emplace_back();
    strata[it->second].push_back(i);
  }
  return strata;
}

std::string stratum_name(const StanceExample& ex) {
  return ex.target + "/" + std::string(to_string(ex.label));
}

Dataset select(const Dataset& dataset, std::vector<std::size_t> indices, std::string name) {
  std::sort(indices.begin(), indices.end());
  std::vector<StanceExample> picked;
  picked.reserve(indices.size());
  for (std::size_t i : indices) picked.push_back(dataset[i]);
  return Dataset(std::move(name), std::move(picked));
}

std::size_t validation_share(std::size_t n, SplitRatio ratio) {
  const std::size_t parts = ratio.train + ratio.validation;
  return (2 * n * ratio.validation + parts) / (2 * parts);
}

struct HeaderMap {
  std::vector<std::size_t> columns;
};

HeaderMap expect_header(const csv::Row& header, const std::vector<std::string>& expected,
                        const std::string& source) {
  HeaderMap map;
  for (const auto& want : expected) {
    auto it = std::find_if(header.fields.begin(), header.fields.end(),
                           [&](const std::string& f) { return lower(trim(f)) == lower(want); });
    if (it == header.fields.end())
      throw ParseError(source, header.line, "missing header column '" + want + "'");
    map.columns.push_back(static_cast<std::size_t>(it - header.fields.begin()));
  }
  return map;
}

StanceLabel label_or_throw(std::string_view text, const std::string& source, std::size_t line) {
  auto label = parse_label(text);
  if (!label) throw ParseError(source, line, "unknown label '" + std::string(text) + "'");
  return *label;
}

struct RawRow {
  std::size_t line;
  StanceExample example;
  std::string set;
};

std::vector<RawRow> parse_rows(std::string_view content, Format format, const std::string& source) {
  if (content.find_first_not_of(" \t\r\n") == std::string_view::npos)
    throw ParseError(source, 0, "empty file");
  const auto rows = format == Format::GenericCsv ? csv::read_csv(content, source) : csv::read_tsv(content);
  if (rows.empty()) throw ParseError(source, 0, "empty file");

  std::vector<std::string> expected;
  switch (format) {
    case Format::SemevalTsv:
      expected = {"ID", "Target", "Tweet", "Stance"};
      break;
    case Format::UkpTsv:
      expected = {"topic", "sentence", "annotation", "set"};
      break;
    case Format::GenericCsv:
      expected = {"id", "target", "text", "label"};
      break;
  }
  const HeaderMap header = expect_header(rows.front(), expected, source);
  if (rows.size() == 1) throw ParseError(source, rows.front().line, "empty file: header without data rows");

  std::vector<RawRow> out;
  out.reserve(rows.size() - 1);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.fields.size() != rows.front().fields.size())
      throw ParseError(source, row.line,
                       "expected " + std::to_string(rows.front().fields.size()) + " columns, found " +
                           std::to_string(row.fields.size()));
    auto col = [&](std::size_t k) -> const std::string& { return row.fields[header.columns[k]]; };
    RawRow raw;
    raw.line = row.line;
    switch (format) {
      case Format::SemevalTsv:
      case Format::GenericCsv:
        raw.example.id = trim(col(0));
        raw.example.target = trim(col(1));
        raw.example.text = trim(col(2));
        raw.example.label = label_or_throw(col(3), source, row.line);
        break;
      case Format::UkpTsv: {
        raw.example.target = trim(col(0));
        raw.example.text = trim(col(1));
        raw.example.label = label_or_throw(col(2), source, row.line);
        raw.set = lower(trim(col(3)));
        if (raw.set != "train" && raw.set != "val" && raw.set != "test")
          throw ParseError(source, row.line, "unknown set '" + raw.set + "'");
        raw.example.id = "ukp-" + std::to_string(row.line);
        break;
      }
    }
    if (raw.example.id.empty()) throw ParseError(source, row.line, "empty id");
    if (raw.example.target.empty()) throw ParseError(source, row.line, "empty target");
    if (raw.example.text.empty()) throw ParseError(source, row.line, "empty text");
    out.push_back(std::move(raw));
  }

  std::unordered_map<std::string, std::size_t> seen;
  for (const auto& raw : out) {
    auto [it, inserted] = seen.emplace(raw.example.id, raw.line);
    if (!inserted)
      throw ParseError(source, raw.line,
                       "duplicate id '" + raw.example.id + "' (first seen on line " + std::to_string(it->second) + ")");
  }
  return out;
}

}  // namespace

Dataset::Dataset(std::string name, std::vector<StanceExample> examples)
    : name_(std::move(name)), examples_(std::move(examples)) {
  std::unordered_set<std::string> ids;
  std::unordered_set<std::string> seen_targets;
  for (const auto& ex : examples_) {
    if (ex.target.empty()) throw Error("dataset " + name_ + ": example '" + ex.id + "' has an empty target");
    if (ex.text.empty()) throw Error("dataset " + name_ + ": example '" + ex.id + "' has an empty text");
    if (!ids.insert(ex.id).second) throw Error("dataset " + name_ + ": duplicate id '" + ex.id + "'");
    if (seen_targets.insert(ex.target).second) targets_.push_back(ex.target);
  }
}

std::size_t Dataset::count(std::string_view target, StanceLabel label) const {
  return static_cast<std::size_t>(std::count_if(examples_.begin(), examples_.end(), [&](const StanceExample& ex) {
    return ex.target == target && ex.label == label;
  }));
}

std::size_t Dataset::count(std::string_view target) const {
  return static_cast<std::size_t>(
      std::count_if(examples_.begin(), examples_.end(), [&](const StanceExample& ex) { return ex.target == target; }));
}

std::size_t Dataset::count(StanceLabel label) const {
  return static_cast<std::size_t>(
      std::count_if(examples_.begin(), examples_.end(), [&](const StanceExample& ex) { return ex.label == label; }));
}

Dataset Dataset::filter_target(std::string_view target) const {
  std::vector<StanceExample> kept;
  for (const auto& ex : examples_)
    if (ex.target == target) kept.push_back(ex);
  return Dataset(name_ + "[" + std::string(target) + "]", std::move(kept));
}

Dataset concat(std::string name, std::span<const Dataset> parts) {
  std::vector<StanceExample> all;
  for (const auto& part : parts) all.insert(all.end(), part.examples().begin(), part.examples().end());
  return Dataset(std::move(name), std::move(all));
}

Format parse_format(std::string_view name) {
  const std::string key = lower(name);
  if (key == "semeval-tsv") return Format::SemevalTsv;
  if (key == "ukp-tsv") return Format::UkpTsv;
  if (key == "generic-csv") return Format::GenericCsv;
  throw Error("unknown dataset format '" + std::string(name) + "' (expected semeval-tsv, ukp-tsv or generic-csv)");
}

std::string_view to_string(Format format) {
  switch (format) {
    case Format::SemevalTsv:
      return "semeval-tsv";
    case Format::UkpTsv:
      return "ukp-tsv";
    case Format::GenericCsv:
      return "generic-csv";
  }
  return "generic-csv";
}

Dataset parse_dataset(std::string_view content, Format format, const std::string& name) {
  auto rows = parse_rows(content, format, name);
  std::vector<StanceExample> examples;
  examples.reserve(rows.size());
  for (auto& raw : rows) examples.push_back(std::move(raw.example));
  return Dataset(name, std::move(examples));
}

Dataset load_dataset(const std::filesystem::path& path, Format format) {
  auto dataset = parse_dataset(csv::read_file(path), format, path.string());
  dataset.set_name(path.stem().string());
  return dataset;
}

SplitSpec parse_ukp_splits(std::string_view content, const std::string& name) {
  auto rows = parse_rows(content, Format::UkpTsv, name);
  std::vector<StanceExample> train, val, test;
  for (auto& raw : rows) {
    auto& bucket = raw.set == "train" ? train : raw.set == "val" ? val : test;
    bucket.push_back(std::move(raw.example));
  }
  SplitSpec split;
  split.name = name;
  split.train = Dataset(name + "/train", std::move(train));
  split.validation = Dataset(name + "/val", std::move(val));
  split.test = Dataset(name + "/test", std::move(test));
  split.provenance = "provided train/val/test assignment (set column)";
  return split;
}

SplitSpec load_ukp_splits(const std::filesystem::path& path) {
  auto split = parse_ukp_splits(csv::read_file(path), path.string());
  const auto stem = path.stem().string();
  split.name = stem;
  split.train.set_name(stem + "/train");
  split.validation.set_name(stem + "/val");
  split.test.set_name(stem + "/test");
  return split;
}

void write_generic_csv(std::ostream& out, const Dataset& dataset) {
  csv::write_row(out, {"id", "target", "text", "label"});
  for (const auto& ex : dataset.examples())
    csv::write_row(out, {ex.id, ex.target, ex.text, std::string(to_string(ex.label))});
}

void save_generic_csv(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write_generic_csv(out, dataset);
}

SplitSpec split_train_val(const Dataset& dataset, SplitRatio ratio, std::uint64_t seed, bool stratified) {
  if (ratio.train == 0 || ratio.validation == 0) throw Error("split ratio components must be positive");
  if (dataset.empty()) throw Error("cannot split empty dataset " + dataset.name());
  const std::size_t parts = ratio.train + ratio.validation;

  std::vector<std::size_t> train_idx, val_idx;
  auto divide = [&](std::vector<std::size_t> members, std::string_view stream) {
    Rng rng = substream(seed, stream);
    std::shuffle(members.begin(), members.end(), rng);
    const std::size_t n_val = validation_share(members.size(), ratio);
    val_idx.insert(val_idx.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_val));
    train_idx.insert(train_idx.end(), members.begin() + static_cast<std::ptrdiff_t>(n_val), members.end());
  };

  std::ostringstream provenance;
  provenance << "split " << ratio.train << ":" << ratio.validation << " seed " << seed;
  if (stratified) {
    provenance << ", stratified by target/label";
    std::vector<std::size_t> pooled;
    std::vector<std::string> pooled_names;
    for (auto& stratum : strata_of(dataset)) {
      const auto name = stratum_name(dataset[stratum.front()]);
      if (stratum.size() < parts) {
        pooled.insert(pooled.end(), stratum.begin(), stratum.end());
        pooled_names.push_back(name);
      } else {
        divide(std::move(stratum), "split/" + name);
      }
    }
    if (!pooled.empty()) {
      std::sort(pooled.begin(), pooled.end());
      divide(std::move(pooled), "split/fallback");
      provenance << "; unstratified fallback for strata smaller than " << parts << ":";
      for (const auto& n : pooled_names) provenance << " " << n;
    }
  } else {
    provenance << ", unstratified";
    std::vector<std::size_t> all(dataset.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    divide(std::move(all), "split/all");
  }

  SplitSpec split;
  split.name = dataset.name();
  split.train = select(dataset, std::move(train_idx), dataset.name() + "/train");
  split.validation = select(dataset, std::move(val_idx), dataset.name() + "/val");
  split.test = Dataset(dataset.name() + "/test", {});
  split.provenance = provenance.str();
  split.seed = seed;
  return split;
}

Dataset sample_few_shot(const Dataset& train, std::size_t k, std::uint64_t seed) {
  if (k == 0) throw Error("few-shot k must be at least 1");
  // Per target: k from every label, then any label's shortfall is taken
  // round-robin (label order) from the labels that still have examples, so a
  // target contributes 3k whenever it holds that many.
  auto strata = strata_of(train);
  std::map<std::string, std::array<std::ptrdiff_t, kNumLabels>> slot_of;
  for (std::size_t s = 0; s < strata.size(); ++s) {
    const auto& ex = train[strata[s].front()];
    auto [it, inserted] = slot_of.try_emplace(ex.target);
    if (inserted) it->second.fill(-1);
    it->second[index_of(ex.label)] = static_cast<std::ptrdiff_t>(s);
  }
  std::vector<std::size_t> take(strata.size(), 0);
  std::vector<std::string> shortfalls;
  for (const auto& [target, slots] : slot_of) {
    std::size_t deficit = 0;
    for (std::size_t l = 0; l < kNumLabels; ++l) {
      const std::size_t have = slots[l] < 0 ? 0 : strata[static_cast<std::size_t>(slots[l])].size();
      if (have < k) {
        deficit += k - have;
        shortfalls.push_back(target + "/" + std::string(to_string(label_at(l))) + ":" + std::to_string(have));
      }
      if (slots[l] >= 0) take[static_cast<std::size_t>(slots[l])] = std::min(k, have);
    }
    while (deficit > 0) {
      bool moved = false;
      for (std::size_t l = 0; l < kNumLabels && deficit > 0; ++l) {
        if (slots[l] < 0) continue;
        const auto s = static_cast<std::size_t>(slots[l]);
        if (take[s] < strata[s].size()) {
          ++take[s];
          --deficit;
          moved = true;
        }
      }
      if (!moved) break;
    }
  }
  std::vector<std::size_t> chosen;
  for (std::size_t s = 0; s < strata.size(); ++s) {
    auto& stratum = strata[s];
    if (take[s] < stratum.size()) {
      Rng rng = substream(seed, "fewshot/" + stratum_name(train[stratum.front()]));
      std::shuffle(stratum.begin(), stratum.end(), rng);
    }
    chosen.insert(chosen.end(), stratum.begin(), stratum.begin() + static_cast<std::ptrdiff_t>(take[s]));
  }
  std::string name = train.name() + "/k=" + std::to_string(k) + "/seed=" + std::to_string(seed);
  if (!shortfalls.empty()) {
    name += "/shortfall[";
    for (std::size_t i = 0; i < shortfalls.size(); ++i) name += (i ? "," : "") + shortfalls[i];
    name += "]";
  }
  return select(train, std::move(chosen), std::move(name));
}

SplitSpec make_cross_target_task(const Dataset& source, const Dataset& destination) {
  if (source.empty()) throw Error("empty source");
  if (destination.empty()) throw Error("empty destination");
  if (source.targets().size() != 1)
    throw Error("cross-target source must contain exactly one target, found " + std::to_string(source.targets().size()));
  if (destination.targets().size() != 1)
    throw Error("cross-target destination must contain exactly one target, found " +
                std::to_string(destination.targets().size()));
  const auto& from = source.targets().front();
  const auto& to = destination.targets().front();
  SplitSpec split;
  split.name = target_abbreviation(from) + "→" + target_abbreviation(to);
  split.train = source;
  split.validation = Dataset(split.name + "/val", {});
  split.test = destination;
  split.provenance = "cross-target " + from + "→" + to;
  if (from == to) split.provenance += " (in-target)";
  return split;
}

std::string target_abbreviation(std::string_view target) {
  static const std::unordered_map<std::string, std::string> known = {
      {"atheism", "AT"},
      {"climate change is a real concern", "CC"},
      {"feminist movement", "FM"},
      {"hillary clinton", "HC"},
      {"legalization of abortion", "LA"},
      {"donald trump", "DT"},
      {"trade policy", "TP"},
      {"abortion", "AB"},
      {"cloning", "CL"},
      {"death penalty", "DP"},
      {"gun control", "GC"},
      {"marijuana legalization", "ML"},
      {"minimum wage", "MW"},
      {"nuclear energy", "NE"},
      {"school uniforms", "SU"},
  };
  const std::string key = lower(trim(target));
  if (auto it = known.find(key); it != known.end()) return it->second;

  static const std::unordered_set<std::string> minor = {"a", "an", "the", "of", "is", "on", "in", "and", "to", "for"};
  std::istringstream words(key);
  std::vector<std::string> kept;
  for (std::string w; words >> w;)
    if (!minor.count(w)) kept.push_back(w);
  std::string code;
  if (kept.size() == 1) {
    code = kept.front().substr(0, 2);
  } else {
    for (const auto& w : kept) code.push_back(w.front());
  }
  std::transform(code.begin(), code.end(), code.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return code.empty() ? std::string(target) : code;
}

std::string resolve_target(std::string_view name, const std::vector<std::string>& targets) {
  const std::string key = lower(trim(name));
  for (const auto& t : targets)
    if (lower(t) == key) return t;
  for (const auto& t : targets)
    if (lower(target_abbreviation(t)) == key) return t;
  std::string available;
  for (const auto& t : targets) available += (available.empty() ? "" : ", ") + t + " (" + target_abbreviation(t) + ")";
  throw Error("unknown target '" + std::string(name) + "'; available: " + available);
}

}  // namespace tapd::corpus
