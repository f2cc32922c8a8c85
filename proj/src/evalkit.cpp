// Copyright 2026 The tapd Authors
// SPDX-License-Identifier: Apache-2.0

#include "tapd/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "tapd/csv.hpp"
#include "tapd/error.hpp"

namespace tapd::evalkit {

std::size_t Confusion::total() const {
  std::size_t n = 0;
  for (const auto& row : counts)
    for (std::size_t c : row) n += c;
  return n;
}

Confusion& Confusion::operator+=(const Confusion& other) {
  for (std::size_t g = 0; g < 3; ++g)
    for (std::size_t p = 0; p < 3; ++p) counts[g][p] += other.counts[g][p];
  return *this;
}

Confusion confusion_of(std::span<const PredictionRecord> records) {
  Confusion c;
  for (const auto& r : records) c.add(r.gold, r.predicted);
  return c;
}

ClassScores class_scores(const Confusion& confusion, StanceLabel cls) {
  const std::size_t k = index_of(cls);
  const std::size_t tp = confusion.counts[k][k];
  std::size_t predicted = 0;
  std::size_t gold = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    predicted += confusion.counts[i][k];
    gold += confusion.counts[k][i];
  }
  ClassScores s;
  s.precision = predicted ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
  s.recall = gold ? static_cast<double>(tp) / static_cast<double>(gold) : 0.0;
  const double denom = s.precision + s.recall;
  s.f1 = denom > 0.0 ? 2.0 * s.precision * s.recall / denom : 0.0;
  return s;
}

double f1_for_class(std::span<const PredictionRecord> records, StanceLabel cls) {
  if (records.empty()) throw Error("f1_for_class: no records");
  return class_scores(confusion_of(records), cls).f1;
}

double f_avg(const Confusion& confusion) {
  return (class_scores(confusion, StanceLabel::Favor).f1 + class_scores(confusion, StanceLabel::Against).f1) / 2.0;
}

double f_avg(std::span<const PredictionRecord> records) {
  if (records.empty()) throw Error("f_avg: no records");
  return f_avg(confusion_of(records));
}

double macro_average(std::span<const double> values) {
  if (values.empty()) throw Error("macro_average: no targets");
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

const TargetScores& EvalReport::target(std::string_view name) const {
  for (const auto& [t, scores] : per_target)
    if (t == name) return scores;
  throw Error("report has no target '" + std::string(name) + "'");
}

EvalReport macro_micro(std::span<const PredictionRecord> records) {
  if (records.empty()) throw Error("macro_micro: no records");
  std::unordered_set<std::string> ids;
  EvalReport report;
  std::map<std::string, std::size_t> slot;
  for (const auto& r : records) {
    if (r.target.empty()) throw Error("record '" + r.example_id + "' has an empty target");
    if (!ids.insert(r.example_id).second) throw Error("duplicate example id '" + r.example_id + "'");
    auto [it, fresh] = slot.emplace(r.target, report.per_target.size());
    if (fresh) report.per_target.emplace_back(r.target, TargetScores{});
    report.per_target[it->second].second.confusion.add(r.gold, r.predicted);
    report.pooled.add(r.gold, r.predicted);
  }
  std::vector<double> per_target;
  for (auto& [_, s] : report.per_target) {
    s.f_favor = class_scores(s.confusion, StanceLabel::Favor).f1;
    s.f_against = class_scores(s.confusion, StanceLabel::Against).f1;
    s.f_avg = (s.f_favor + s.f_against) / 2.0;
    per_target.push_back(s.f_avg);
  }
  report.mac_f_avg = macro_average(per_target);
  report.mic_f_favor = class_scores(report.pooled, StanceLabel::Favor).f1;
  report.mic_f_against = class_scores(report.pooled, StanceLabel::Against).f1;
  report.mic_f_avg = (report.mic_f_favor + report.mic_f_against) / 2.0;
  report.num_records = records.size();
  return report;
}

MetricSummary mean_std(std::span<const double> values) {
  if (values.empty()) throw Error("mean_std: no values");
  // Shifted by the first value so identical inputs give exactly 0.
  const double n = static_cast<double>(values.size());
  const double shift = values.front();
  double offset = 0.0;
  for (double v : values) offset += v - shift;
  offset /= n;
  double var = 0.0;
  for (double v : values) var += (v - shift - offset) * (v - shift - offset);
  MetricSummary s;
  s.mean = shift + offset;
  s.std = std::sqrt(var / n);
  return s;
}

AggregateReport aggregate_runs(std::span<const EvalReport> reports) {
  if (reports.empty()) throw Error("aggregate_runs: no reports");
  std::map<std::string, std::vector<double>> series;
  for (const auto& r : reports) {
    series["MacF_avg"].push_back(r.mac_f_avg);
    series["MicF_avg"].push_back(r.mic_f_avg);
    for (const auto& [t, s] : r.per_target) series[t + "/F_avg"].push_back(s.f_avg);
  }
  AggregateReport agg;
  agg.runs = reports.size();
  for (const auto& [key, values] : series)
    if (values.size() == reports.size()) agg.metrics[key] = mean_std(values);
  return agg;
}

std::string percent(double value) {
  // Half-up; the small bias absorbs binary representation error at .5 ties.
  const double scaled = std::floor(value * 10000.0 + 0.5 + 1e-9);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", scaled / 100.0);
  return buf;
}

std::string format_summary(const MetricSummary& summary) {
  return percent(summary.mean) + " (±" + percent(summary.std) + ")";
}

std::vector<PredictionRecord> align(std::span<const corpus::StanceExample> gold,
                                    const std::map<std::string, StanceLabel>& predicted) {
  std::vector<PredictionRecord> out;
  std::vector<std::string> missing;
  std::set<std::string> seen;
  for (const auto& ex : gold) {
    seen.insert(ex.id);
    auto it = predicted.find(ex.id);
    if (it == predicted.end()) {
      missing.push_back(ex.id);
      continue;
    }
    out.push_back({ex.id, ex.target, ex.label, it->second});
  }
  std::vector<std::string> extra;
  for (const auto& [id, _] : predicted)
    if (!seen.count(id)) extra.push_back(id);
  if (!missing.empty() || !extra.empty()) {
    auto join = [](const std::vector<std::string>& ids) {
      std::string s;
      for (std::size_t i = 0; i < ids.size() && i < 20; ++i) s += (i ? ", " : "") + ids[i];
      if (ids.size() > 20) s += ", ... (" + std::to_string(ids.size()) + " total)";
      return s.empty() ? std::string("none") : s;
    };
    throw Error("prediction ids do not match gold ids; missing: " + join(missing) + "; extra: " + join(extra));
  }
  return out;
}

std::string write_predictions_csv(std::span<const PredictionRecord> records) {
  std::ostringstream out;
  csv::write_row(out, {"id", "target", "gold", "predicted"});
  for (const auto& r : records)
    csv::write_row(out, {r.example_id, r.target, std::string(to_string(r.gold)), std::string(to_string(r.predicted))});
  return out.str();
}

std::vector<PredictionRecord> read_predictions_csv(std::string_view content, const std::string& source) {
  const auto rows = csv::read_csv(content, source);
  if (rows.empty()) throw ParseError(source, 1, "empty file");
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < rows[0].fields.size(); ++i) {
    std::string name = rows[0].fields[i];
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
    col[name] = i;
  }
  for (const char* need : {"id", "predicted"})
    if (!col.count(need)) throw ParseError(source, rows[0].line, std::string("missing column '") + need + "'");
  std::vector<PredictionRecord> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r].fields;
    if (f.size() != rows[0].fields.size())
      throw ParseError(source, rows[r].line,
                       "expected " + std::to_string(rows[0].fields.size()) + " fields, found " + std::to_string(f.size()));
    PredictionRecord rec;
    rec.example_id = f[col["id"]];
    if (col.count("target")) rec.target = f[col["target"]];
    auto label = [&](const std::string& column) {
      const auto parsed = parse_label(f[col[column]]);
      if (!parsed) throw ParseError(source, rows[r].line, "unknown label '" + f[col[column]] + "'");
      return *parsed;
    };
    rec.predicted = label("predicted");
    if (col.count("gold")) rec.gold = label("gold");
    out.push_back(std::move(rec));
  }
  return out;
}

void save_predictions(const std::filesystem::path& path, std::span<const PredictionRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << write_predictions_csv(records);
}

namespace {

nlohmann::json confusion_json(const Confusion& c) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : c.counts) rows.push_back(row);
  return rows;
}

}  // namespace

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json per_target = nlohmann::json::array();
  for (const auto& [t, s] : report.per_target)
    per_target.push_back({{"target", t},
                          {"F_favor", s.f_favor},
                          {"F_against", s.f_against},
                          {"F_avg", s.f_avg},
                          {"confusion", confusion_json(s.confusion)}});
  return {{"per_target", per_target},
          {"MacF_avg", report.mac_f_avg},
          {"MicF_avg", report.mic_f_avg},
          {"MicF_favor", report.mic_f_favor},
          {"MicF_against", report.mic_f_against},
          {"pooled_confusion", confusion_json(report.pooled)},
          {"confusion_order", {"FAVOR", "NONE", "AGAINST"}},
          {"num_records", report.num_records}};
}

nlohmann::json to_json(const AggregateReport& report) {
  nlohmann::json metrics = nlohmann::json::object();
  for (const auto& [k, s] : report.metrics)
    metrics[k] = {{"mean", s.mean}, {"std", s.std}, {"display", format_summary(s)}};
  return {{"runs", report.runs}, {"metrics", metrics}};
}

std::string render_table(const EvalReport& report, std::string_view row_label) {
  std::vector<std::string> header{"Model"};
  std::vector<std::string> row{std::string(row_label)};
  for (const auto& [t, s] : report.per_target) {
    header.push_back(corpus::target_abbreviation(t));
    row.push_back(percent(s.f_avg));
  }
  header.insert(header.end(), {"MacF_avg", "MicF_avg"});
  row.insert(row.end(), {percent(report.mac_f_avg), percent(report.mic_f_avg)});
  std::vector<std::size_t> width(header.size());
  for (std::size_t i = 0; i < header.size(); ++i) width[i] = std::max(header[i].size(), row[i].size());
  auto line = [&](const std::vector<std::string>& cells) {
    std::string s;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      s += cells[i] + std::string(width[i] - cells[i].size(), ' ');
      if (i + 1 < cells.size()) s += "  ";
    }
    return s + "\n";
  };
  return line(header) + line(row);
}

}  // namespace tapd::evalkit
