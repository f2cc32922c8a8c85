// Copyright 2026 The tapd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tapd/corpus.hpp"
#include "tapd/evalkit.hpp"
#include "tapd/synthetic.hpp"
#include "tapd/trainer.hpp"

namespace tapd::cli {

struct DataConfig {
  /// semeval | ukp | csv | synthetic | synthetic-semeval | synthetic-ukp
  std::string format = "synthetic";
  std::filesystem::path train, validation, test, splits;
  corpus::synthetic::KeywordCorpusOptions synthetic;
};

struct StubConfig {
  std::size_t d_h = 16;
  std::size_t max_positions = 256;
  std::size_t vocab_size = 4096;
  std::uint64_t seed = 0;
};

/// A fully resolved run configuration.
struct RunConfig {
  DataConfig data;
  std::string backend = "stub";
  StubConfig stub;
  std::string pretrained_dtype = "float32";
  std::vector<std::string> prompt_order{"P1", "P2", "P3"};
  std::filesystem::path patterns_file;
  std::uint64_t seed = 0;
  trainer::TrainConfig train;
  std::vector<std::size_t> fewshot_k{2, 5, 10, 20, 30};
  std::size_t repeats = 5;
  std::string source, destination;
};

/// Every key with its default value; the schema for files and overrides.
nlohmann::json default_config_json();

/// Reads a config document layered over the defaults. Relative paths are
/// resolved against `base_dir`. Throws ConfigError naming the field.
RunConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
nlohmann::json to_json(const RunConfig& config);

/// Applies TAPD_<UPPER_PATH> variables (e.g. TAPD_TRAIN_LEARNING_RATE) for
/// every leaf of the default schema. Values are read as JSON, falling back to
/// a plain string; list-valued keys also accept comma-separated text.
using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
nlohmann::json apply_env_overrides(nlohmann::json config, const EnvLookup& env);
EnvLookup process_env();

/// Defaults < file < environment.
RunConfig load_config(const std::optional<std::filesystem::path>& path, const EnvLookup& env);

struct LoadedData {
  corpus::SplitSpec split;
  std::map<std::string, std::string> fingerprints;
};

/// Loads the configured corpus; carves a 5:1 validation split from train
/// when the source has none.
LoadedData load_data(const RunConfig& config);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Deterministic id from the command name and resolved config.
std::string run_id(const std::string& command, const nlohmann::json& config);

struct TrainOutcome {
  trainer::RunManifest manifest;
  evalkit::EvalReport report;
  std::filesystem::path out_dir;
};

TrainOutcome cmd_train(const RunConfig& config, const std::filesystem::path& out_dir);

struct FewShotCell {
  std::size_t k = 0;
  std::size_t repeat = 0;
  std::size_t train_size = 0;
  std::optional<evalkit::EvalReport> report;
  std::string error;
};

struct FewShotOutcome {
  trainer::RunManifest manifest;
  std::vector<FewShotCell> cells;
  std::map<std::size_t, evalkit::AggregateReport> aggregates;
  std::string table;
};

FewShotOutcome cmd_fewshot(const RunConfig& config, const std::filesystem::path& out_dir);

struct CrossTargetOutcome {
  trainer::RunManifest manifest;
  evalkit::EvalReport report;
  std::string source, destination;
  bool in_target = false;
};

CrossTargetOutcome cmd_cross_target(const RunConfig& config, const std::filesystem::path& out_dir);

/// Scores a prediction CSV. With no gold file the predictions' own target
/// and gold columns are used.
evalkit::EvalReport cmd_eval(const std::filesystem::path& predictions, const std::optional<std::filesystem::path>& gold,
                             corpus::Format gold_format, const std::optional<std::filesystem::path>& out_dir);

struct AnalyzeOptions {
  std::filesystem::path checkpoint;
  std::string mode;  // stance-words | mask-words
  std::filesystem::path data;
  corpus::Format format = corpus::Format::GenericCsv;
  std::size_t k = 10;
  std::size_t limit = 5;
  std::string space = "projected";
};

std::string cmd_analyze(const AnalyzeOptions& options, const std::filesystem::path& out_dir);

/// Entry point; returns the process exit code (0 ok, 1 runtime failure,
/// 2 usage or configuration error).
int main(int argc, char** argv);

}  // namespace tapd::cli
