// Copyright 2026 The tapd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tapd/corpus.hpp"
#include "tapd/encoder.hpp"
#include "tapd/evalkit.hpp"
#include "tapd/prompts.hpp"
#include "tapd/tokenizer.hpp"
#include "tapd/verbalizer.hpp"

namespace tapd::trainer {

using verbalizer::StanceDistribution;

// ---------------------------------------------------------------- losses

/// -log probs[gold]. Infinite when probs[gold] is 0.
double classification_loss(const StanceDistribution& probs, StanceLabel gold);

/// Cross-entropy of the student under the teacher's soft labels,
/// -Σ teacher_i log student_i. Throws Error if the temperatures differ.
double distillation_loss(const StanceDistribution& student, const StanceDistribution& teacher);

/// λ·Lc + (1-λ)·T²·Ld.
double total_loss(double lc, double ld, double lambda, double temperature);

/// Loss value and gradient with respect to the raw (temperature-free)
/// logits, computed in log-space. Without a teacher the objective is the
/// classification loss alone.
struct LogitLoss {
  double classification = 0.0;
  double distillation = 0.0;
  double total = 0.0;
  std::array<double, 3> grad{};
};

LogitLoss logit_loss(const std::array<double, 3>& logits, StanceLabel gold,
                     const std::optional<std::array<double, 3>>& teacher_soft, double lambda, double temperature);

// ---------------------------------------------------------------- config

enum class HeadKind { TargetAware, Fixed };

struct TrainConfig {
  double learning_rate = 1e-5;
  std::size_t batch_size = 32;
  std::size_t max_len = 128;
  double lambda = 0.8;
  double temperature = 2.0;
  std::size_t epochs = 10;
  std::size_t patience = 3;
  std::uint64_t seed = 0;
  std::size_t d_m = 384;
  /// Dropout on the verbalizer head inputs during training.
  double dropout = 0.5;
  /// Students start from the base encoder with a new head; false copies the
  /// teacher's parameters instead.
  bool fresh_student = true;
  HeadKind head = HeadKind::TargetAware;
  /// Words for the fixed verbalizer, in (Favor, None, Against) order.
  std::array<std::string, 3> label_words{"yes", "maybe", "no"};
  /// Initialise stance vectors from these words' embeddings instead of at
  /// random, when set.
  std::optional<std::array<std::string, 3>> stance_seed_words;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
/// Missing keys keep their defaults; wrong types and bad values throw
/// ConfigError with the dotted field path under `prefix`.
TrainConfig train_config_from_json(const nlohmann::json& j, const std::string& prefix = "train");

std::string_view to_string(HeadKind kind);
HeadKind parse_head_kind(std::string_view name);

// ---------------------------------------------------------------- models

/// Everything needed to turn an example into a distribution: tokenizer,
/// pattern, encoder and the verbalizer.
struct Model {
  std::shared_ptr<const Tokenizer> tokenizer;
  prompts::PromptPattern pattern;
  std::unique_ptr<encoder::Encoder> encoder;
  HeadKind head_kind = HeadKind::TargetAware;
  verbalizer::VerbalizerHead head;
  encoder::LabelWords label_words{};
  std::size_t max_len = 128;

  Model clone() const;
  /// Encoder and head parameters trained in-process.
  std::vector<encoder::Parameter*> parameters();
  void zero_grad();
};

/// Builds the stage-k student for `pattern` from base weights; `seed`
/// drives head initialisation.
using ModelFactory = std::function<Model(const prompts::PromptPattern& pattern, std::uint64_t seed)>;

/// Factory that clones `base` for every stage and adds a fresh head sized by
/// `config`.
ModelFactory base_model_factory(std::shared_ptr<const Tokenizer> tokenizer,
                                std::shared_ptr<const encoder::Encoder> base, const TrainConfig& config);

/// Label-word ids for the fixed verbalizer; each word must be a single
/// vocabulary entry.
encoder::LabelWords resolve_label_words(const Tokenizer& tokenizer, const std::array<std::string, 3>& words);

/// Raw logits per instance in inference mode.
std::vector<std::array<double, 3>> model_logits(const Model& model, std::span<const prompts::PromptInstance> batch);

struct Prediction {
  StanceLabel label = StanceLabel::None;
  StanceDistribution distribution;
};

/// Renders with the model's own pattern and classifies at temperature 1.
std::vector<Prediction> predict(const Model& model, std::span<const corpus::StanceExample> examples,
                                std::size_t batch_size = 32);

/// Majority label per example; ties go to the label of `models[best]`.
std::vector<StanceLabel> vote_predict(std::span<const Model* const> models, std::size_t best,
                                      std::span<const corpus::StanceExample> examples);

std::vector<evalkit::PredictionRecord> to_records(std::span<const corpus::StanceExample> examples,
                                                  std::span<const Prediction> predictions);

// ---------------------------------------------------------------- training

/// Adam over a fixed parameter list, with bias correction.
class Adam {
 public:
  Adam(std::vector<encoder::Parameter*> parameters, encoder::AdamSettings settings);
  void step();
  std::size_t steps() const { return steps_; }
  const encoder::AdamSettings& settings() const { return settings_; }

 private:
  std::vector<encoder::Parameter*> parameters_;
  encoder::AdamSettings settings_;
  std::vector<encoder::Matrix> m_, v_;
  std::size_t steps_ = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<double> val_metric;

  bool operator==(const EpochRecord&) const = default;
};

struct Checkpoint {
  std::size_t stage_index = 0;
  std::string pattern_id;
  std::shared_ptr<const Model> model;
  /// Validation MicF of the retained parameters; unset without validation data.
  std::optional<double> val_metric;
  /// 1-based epoch of the retained parameters.
  std::size_t epoch = 0;
  std::vector<EpochRecord> history;
  TrainConfig config;
  std::uint64_t seed = 0;
  std::string run_id;
  std::filesystem::path path;
};

struct Stage {
  std::size_t index = 0;
  Model model;
  std::shared_ptr<const Model> teacher;
  std::uint64_t seed = 0;
};

/// Fine-tunes `stage.model` on split.train. With a teacher, its soft labels
/// (teacher pattern, temperature T) enter through the distillation term.
/// Keeps the parameters with the best validation MicF and stops after
/// `patience` epochs without improvement. Without validation data the last
/// epoch is kept. Throws NumericError on a non-finite loss.
Checkpoint train_stage(Stage stage, const corpus::SplitSpec& split, const TrainConfig& config);

/// Seed of stage `index` (0-based) under `root`.
std::uint64_t stage_seed(std::uint64_t root, std::size_t index);

struct StageSummary {
  std::size_t index = 0;
  std::string pattern;
  std::size_t best_epoch = 0;
  std::optional<double> val_metric;
  std::string checkpoint_path;
  std::vector<EpochRecord> history;
};

/// Run record written next to the outputs.
struct RunManifest {
  std::string run_id;
  std::string command;
  std::string created;
  std::string status = "running";
  std::string error;
  nlohmann::json config = nlohmann::json::object();
  std::vector<std::string> prompt_order;
  std::map<std::string, std::string> data_fingerprints;
  std::vector<StageSummary> per_stage;
  nlohmann::json final_metrics = nlohmann::json::object();
  nlohmann::json seeds = nlohmann::json::object();
  double wall_clock_seconds = 0.0;
  std::string tool_version;

  nlohmann::json to_json() const;
  void write(const std::filesystem::path& path) const;
};

struct ChainOptions {
  /// Stage checkpoints are saved here when set.
  std::optional<std::filesystem::path> checkpoint_dir;
  /// Receives per-stage progress; called after every stage and on failure.
  RunManifest* manifest = nullptr;
  std::function<void(const RunManifest&)> on_progress;
};

struct ChainResult {
  Checkpoint final;
  std::vector<Checkpoint> stages;
};

/// Trains one stage per pattern id in order; every stage after the first
/// learns from the previous stage's final model as a frozen teacher.
ChainResult run_distillation_chain(std::span<const std::string> prompt_order, const prompts::PatternRegistry& registry,
                                   const corpus::SplitSpec& split, const TrainConfig& config,
                                   const ModelFactory& factory, const ChainOptions& options = {});

// ---------------------------------------------------------------- archives

/// Single-file archive: magic, version, JSON header (metadata, vocabulary,
/// pattern, config, seed, tensor directory), then little-endian float64
/// tensor data.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tapd::trainer
