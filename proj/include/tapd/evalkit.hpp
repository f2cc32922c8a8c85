// Copyright 2026 The tapd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "tapd/corpus.hpp"
#include "tapd/label.hpp"

namespace tapd::evalkit {

struct PredictionRecord {
  std::string example_id;
  std::string target;
  StanceLabel gold = StanceLabel::None;
  StanceLabel predicted = StanceLabel::None;

  bool operator==(const PredictionRecord&) const = default;
};

/// 3x3 counts indexed [gold][predicted] in StanceLabel order.
struct Confusion {
  std::array<std::array<std::size_t, 3>, 3> counts{};

  void add(StanceLabel gold, StanceLabel predicted) { ++counts[index_of(gold)][index_of(predicted)]; }
  std::size_t total() const;
  Confusion& operator+=(const Confusion& other);
  bool operator==(const Confusion&) const = default;
};

Confusion confusion_of(std::span<const PredictionRecord> records);

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Precision, recall and F1 of one class. A zero denominator yields 0 for
/// that quantity, and F1 is 0 when P + R = 0.
ClassScores class_scores(const Confusion& confusion, StanceLabel cls);

/// F1 of `cls` over `records`. Throws Error on an empty record set.
double f1_for_class(std::span<const PredictionRecord> records, StanceLabel cls);

/// Mean of the Favor and Against F1; None never enters.
double f_avg(std::span<const PredictionRecord> records);
double f_avg(const Confusion& confusion);

/// Arithmetic mean of per-target F_avg values.
double macro_average(std::span<const double> per_target_f_avg);

struct TargetScores {
  double f_favor = 0.0;
  double f_against = 0.0;
  double f_avg = 0.0;
  Confusion confusion;
};

struct EvalReport {
  /// Targets in first-appearance order.
  std::vector<std::pair<std::string, TargetScores>> per_target;
  double mac_f_avg = 0.0;
  double mic_f_avg = 0.0;
  double mic_f_favor = 0.0;
  double mic_f_against = 0.0;
  Confusion pooled;
  std::size_t num_records = 0;

  const TargetScores& target(std::string_view name) const;
};

/// Per-target scores, their macro average, and F_avg over the pooled
/// records. Throws Error on empty input, an empty target, or duplicate ids.
EvalReport macro_micro(std::span<const PredictionRecord> records);

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // population
};

MetricSummary mean_std(std::span<const double> values);

/// Mean and population standard deviation of every metric across repeats.
/// Keys: "MacF_avg", "MicF_avg", and "<target>/F_avg" for targets present in
/// every report.
struct AggregateReport {
  std::size_t runs = 0;
  std::map<std::string, MetricSummary> metrics;
};

AggregateReport aggregate_runs(std::span<const EvalReport> reports);

/// Value in [0,1] shown as a percentage rounded half-up to two decimals.
std::string percent(double value);
/// "mean (±std)" in percentage points.
std::string format_summary(const MetricSummary& summary);

/// Joins gold examples with predicted labels by id. Throws Error listing
/// missing and extra ids when the sets differ.
std::vector<PredictionRecord> align(std::span<const corpus::StanceExample> gold,
                                    const std::map<std::string, StanceLabel>& predicted);

/// CSV with header id,target,gold,predicted.
std::string write_predictions_csv(std::span<const PredictionRecord> records);
std::vector<PredictionRecord> read_predictions_csv(std::string_view content, const std::string& source);
void save_predictions(const std::filesystem::path& path, std::span<const PredictionRecord> records);

nlohmann::json to_json(const EvalReport& report);
nlohmann::json to_json(const AggregateReport& report);

/// Text table: one column per target (abbreviated) followed by MacF_avg and
/// MicF_avg, values in percent.
std::string render_table(const EvalReport& report, std::string_view row_label = "TAPD");

}  // namespace tapd::evalkit
