// Copyright 2026 The tapd Authors
// SPDX-License-Identifier: Apache-2.0

#include "tapd/trainer.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "tapd/error.hpp"
#include "tapd/random.hpp"

namespace tapd::trainer {

using encoder::Matrix;
using encoder::OutputGrad;
using encoder::Parameter;

// ---------------------------------------------------------------- losses

double classification_loss(const StanceDistribution& probs, StanceLabel gold) { return -std::log(probs[gold]); }

double distillation_loss(const StanceDistribution& student, const StanceDistribution& teacher) {
  if (student.temperature != teacher.temperature)
    throw Error("distillation_loss: student at T=" + std::to_string(student.temperature) + " but teacher at T=" +
                std::to_string(teacher.temperature));
  double loss = 0.0;
  for (std::size_t i = 0; i < 3; ++i)
    if (teacher.probs[i] > 0.0) loss -= teacher.probs[i] * std::log(student.probs[i]);
  return loss;
}

double total_loss(double lc, double ld, double lambda, double temperature) {
  if (lambda == 1.0) return lc;
  return lambda * lc + (1.0 - lambda) * temperature * temperature * ld;
}

namespace {

std::array<double, 3> log_softmax(const std::array<double, 3>& z, double temperature) {
  std::array<double, 3> s{};
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < 3; ++i) {
    s[i] = z[i] / temperature;
    top = std::max(top, s[i]);
  }
  double sum = 0.0;
  for (double v : s) sum += std::exp(v - top);
  const double lse = top + std::log(sum);
  for (double& v : s) v -= lse;
  return s;
}

}  // namespace

LogitLoss logit_loss(const std::array<double, 3>& logits, StanceLabel gold,
                     const std::optional<std::array<double, 3>>& teacher_soft, double lambda, double temperature) {
  for (double z : logits)
    if (!std::isfinite(z)) throw NumericError("non-finite logit");
  LogitLoss out;
  const auto lp1 = log_softmax(logits, 1.0);
  const std::size_t y = index_of(gold);
  out.classification = -lp1[y];
  if (!teacher_soft) {
    out.total = out.classification;
    for (std::size_t i = 0; i < 3; ++i) out.grad[i] = std::exp(lp1[i]) - (i == y ? 1.0 : 0.0);
    return out;
  }
  const auto lpt = log_softmax(logits, temperature);
  const auto& q = *teacher_soft;
  for (std::size_t i = 0; i < 3; ++i) out.distillation -= q[i] * lpt[i];
  out.total = total_loss(out.classification, out.distillation, lambda, temperature);
  for (std::size_t i = 0; i < 3; ++i) {
    const double hard = std::exp(lp1[i]) - (i == y ? 1.0 : 0.0);
    const double soft = std::exp(lpt[i]) - q[i];
    out.grad[i] = lambda * hard + (1.0 - lambda) * temperature * soft;
  }
  return out;
}

// ---------------------------------------------------------------- config

std::string_view to_string(HeadKind kind) { return kind == HeadKind::TargetAware ? "target-aware" : "fixed"; }

HeadKind parse_head_kind(std::string_view name) {
  if (name == "target-aware") return HeadKind::TargetAware;
  if (name == "fixed") return HeadKind::Fixed;
  throw Error("unknown verbalizer kind '" + std::string(name) + "' (expected target-aware or fixed)");
}

void TrainConfig::validate() const {
  auto field = [](const char* name) { return std::string("train.") + name; };
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError(field("learning_rate"), "must be positive");
  if (batch_size == 0) throw ConfigError(field("batch_size"), "must be positive");
  if (max_len == 0) throw ConfigError(field("max_len"), "must be positive");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError(field("lambda"), "must lie in [0, 1]");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ConfigError(field("temperature"), "must be positive");
  if (epochs == 0) throw ConfigError(field("epochs"), "must be positive");
  if (d_m == 0) throw ConfigError(field("d_m"), "must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError(field("dropout"), "must lie in [0, 1)");
  for (const auto& w : label_words)
    if (w.empty()) throw ConfigError(field("label_words"), "words must be nonempty");
}

nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j = {{"learning_rate", c.learning_rate},
                      {"batch_size", c.batch_size},
                      {"max_len", c.max_len},
                      {"lambda", c.lambda},
                      {"temperature", c.temperature},
                      {"epochs", c.epochs},
                      {"patience", c.patience},
                      {"seed", c.seed},
                      {"d_m", c.d_m},
                      {"dropout", c.dropout},
                      {"fresh_student", c.fresh_student},
                      {"head", to_string(c.head)},
                      {"label_words", c.label_words}};
  j["stance_seed_words"] = c.stance_seed_words ? nlohmann::json(*c.stance_seed_words) : nlohmann::json(nullptr);
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j, const std::string& prefix) {
  if (!j.is_object()) throw ConfigError(prefix, "expected an object");
  TrainConfig c;
  auto path = [&](const std::string& key) { return prefix + "." + key; };
  auto real = [&](const std::string& key, double& out) {
    if (!j.contains(key)) return;
    if (!j[key].is_number()) throw ConfigError(path(key), "expected a number");
    out = j[key].get<double>();
  };
  auto count = [&](const std::string& key, auto& out) {
    if (!j.contains(key)) return;
    const auto& v = j[key];
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
      throw ConfigError(path(key), "expected a nonnegative integer");
    out = j[key].get<std::uint64_t>();
  };
  auto words = [&](const std::string& key) {
    const auto& v = j[key];
    if (!v.is_array() || v.size() != 3) throw ConfigError(path(key), "expected three words (favor, none, against)");
    std::array<std::string, 3> out;
    for (std::size_t i = 0; i < 3; ++i) {
      if (!v[i].is_string()) throw ConfigError(path(key), "expected strings");
      out[i] = v[i].get<std::string>();
    }
    return out;
  };
  static const std::vector<std::string> known = {"learning_rate", "batch_size",    "max_len", "lambda",
                                                 "temperature",   "epochs",        "patience", "seed",
                                                 "d_m",           "dropout",       "fresh_student", "head",
                                                 "label_words",   "stance_seed_words"};
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError(path(key), "unknown field");

  real("learning_rate", c.learning_rate);
  count("batch_size", c.batch_size);
  count("max_len", c.max_len);
  real("lambda", c.lambda);
  real("temperature", c.temperature);
  count("epochs", c.epochs);
  count("patience", c.patience);
  count("seed", c.seed);
  count("d_m", c.d_m);
  real("dropout", c.dropout);
  if (j.contains("fresh_student")) {
    if (!j["fresh_student"].is_boolean()) throw ConfigError(path("fresh_student"), "expected true or false");
    c.fresh_student = j["fresh_student"].get<bool>();
  }
  if (j.contains("head")) {
    if (!j["head"].is_string()) throw ConfigError(path("head"), "expected a string");
    try {
      c.head = parse_head_kind(j["head"].get<std::string>());
    } catch (const Error& e) {
      throw ConfigError(path("head"), e.what());
    }
  }
  if (j.contains("label_words")) c.label_words = words("label_words");
  if (j.contains("stance_seed_words") && !j["stance_seed_words"].is_null())
    c.stance_seed_words = words("stance_seed_words");
  try {
    c.validate();
  } catch (const ConfigError& e) {
    // validate() names fields under "train."; re-root them under prefix.
    std::string field = e.field();
    if (field.rfind("train.", 0) == 0) field = path(field.substr(6));
    throw ConfigError(field, std::string(e.what()).substr(e.field().size() + 2));
  }
  return c;
}

// ---------------------------------------------------------------- models

Model Model::clone() const {
  Model m;
  m.tokenizer = tokenizer;
  m.pattern = pattern;
  m.encoder = encoder ? encoder->clone() : nullptr;
  m.head_kind = head_kind;
  m.head = head;
  m.label_words = label_words;
  m.max_len = max_len;
  return m;
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out = encoder->parameters();
  if (head_kind == HeadKind::TargetAware)
    for (Parameter* p : head.parameters()) out.push_back(p);
  return out;
}

void Model::zero_grad() {
  encoder->zero_grad();
  for (Parameter* p : head.parameters()) p->grad.setZero();
}

encoder::LabelWords resolve_label_words(const Tokenizer& tokenizer, const std::array<std::string, 3>& words) {
  encoder::LabelWords ids{};
  for (std::size_t i = 0; i < 3; ++i) {
    const auto pieces = tokenizer.encode(words[i]);
    if (pieces.size() != 1 || pieces[0] == tokenizer.unk_id())
      throw ConfigError("train.label_words", "'" + words[i] + "' is not a single vocabulary token");
    ids[i] = pieces[0];
  }
  return ids;
}

ModelFactory base_model_factory(std::shared_ptr<const Tokenizer> tokenizer,
                                std::shared_ptr<const encoder::Encoder> base, const TrainConfig& config) {
  config.validate();
  if (config.head == HeadKind::Fixed) resolve_label_words(*tokenizer, config.label_words);
  return [tokenizer, base, config](const prompts::PromptPattern& pattern, std::uint64_t seed) {
    Model m;
    m.tokenizer = tokenizer;
    m.pattern = pattern;
    m.encoder = base->clone();
    m.head_kind = config.head;
    m.max_len = config.max_len;
    verbalizer::HeadOptions opts;
    opts.d_h = m.encoder->spec().d_h;
    opts.d_m = config.d_m;
    opts.stance_std = m.encoder->embedding_std();
    opts.seed = seed;
    m.head = verbalizer::VerbalizerHead(opts);
    if (config.stance_seed_words) {
      Matrix init(3, static_cast<Eigen::Index>(opts.d_h));
      for (std::size_t i = 0; i < 3; ++i) {
        const auto ids = tokenizer->encode((*config.stance_seed_words)[i]);
        if (ids.empty()) throw ConfigError("train.stance_seed_words", "empty seed word");
        init.row(static_cast<Eigen::Index>(i)) = m.encoder->input_embeddings(ids).colwise().mean();
      }
      m.head.set_stance_vectors(init);
    }
    if (config.head == HeadKind::Fixed) m.label_words = resolve_label_words(*tokenizer, config.label_words);
    return m;
  };
}

std::vector<std::array<double, 3>> model_logits(const Model& model, std::span<const prompts::PromptInstance> batch) {
  std::vector<std::array<double, 3>> out;
  out.reserve(batch.size());
  constexpr std::size_t kChunk = 64;
  const bool fixed = model.head_kind == HeadKind::Fixed;
  for (std::size_t b = 0; b < batch.size(); b += kChunk) {
    const auto chunk = batch.subspan(b, std::min(kChunk, batch.size() - b));
    const auto outputs = model.encoder->encode(chunk, fixed ? &model.label_words : nullptr);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      if (fixed)
        out.push_back(*outputs[i].label_scores);
      else
        out.push_back(verbalizer::head_forward(outputs[i], chunk[i], model.head, 0.0, nullptr).logits);
    }
  }
  return out;
}

std::vector<Prediction> predict(const Model& model, std::span<const corpus::StanceExample> examples,
                                std::size_t batch_size) {
  std::vector<Prediction> out;
  if (examples.empty()) return out;
  if (batch_size == 0) throw Error("predict: batch_size must be positive");
  out.reserve(examples.size());
  for (std::size_t b = 0; b < examples.size(); b += batch_size) {
    const auto slice = examples.subspan(b, std::min(batch_size, examples.size() - b));
    const auto rendered = prompts::batch_render(model.pattern, slice, *model.tokenizer, model.max_len);
    for (const auto& logits : model_logits(model, rendered.instances)) {
      Prediction p;
      p.distribution = verbalizer::softmax(logits, 1.0);
      p.label = p.distribution.argmax();
      out.push_back(p);
    }
  }
  return out;
}

std::vector<StanceLabel> vote_predict(std::span<const Model* const> models, std::size_t best,
                                      std::span<const corpus::StanceExample> examples) {
  if (models.size() < 2) throw Error("vote_predict needs at least two models");
  if (best >= models.size()) throw Error("vote_predict: best model index out of range");
  std::vector<std::vector<Prediction>> panel;
  for (const Model* m : models) panel.push_back(predict(*m, examples));
  std::vector<StanceLabel> out;
  for (std::size_t e = 0; e < examples.size(); ++e) {
    std::array<std::size_t, 3> votes{};
    for (const auto& preds : panel) ++votes[index_of(preds[e].label)];
    const std::size_t top = *std::max_element(votes.begin(), votes.end());
    const auto leaders = std::count(votes.begin(), votes.end(), top);
    if (leaders == 1)
      out.push_back(label_at(static_cast<std::size_t>(std::find(votes.begin(), votes.end(), top) - votes.begin())));
    else
      out.push_back(panel[best][e].label);
  }
  return out;
}

std::vector<evalkit::PredictionRecord> to_records(std::span<const corpus::StanceExample> examples,
                                                  std::span<const Prediction> predictions) {
  if (examples.size() != predictions.size()) throw Error("to_records: size mismatch");
  std::vector<evalkit::PredictionRecord> out;
  out.reserve(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i)
    out.push_back({examples[i].id, examples[i].target, examples[i].label, predictions[i].label});
  return out;
}

// ---------------------------------------------------------------- training

Adam::Adam(std::vector<Parameter*> parameters, encoder::AdamSettings settings)
    : parameters_(std::move(parameters)), settings_(settings) {
  for (const Parameter* p : parameters_) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step() {
  ++steps_;
  const double b1 = settings_.beta1;
  const double b2 = settings_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < parameters_.size(); ++i) {
    Parameter& p = *parameters_[i];
    m_[i] = b1 * m_[i] + (1.0 - b1) * p.grad;
    v_[i] = b2 * v_[i] + (1.0 - b2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= settings_.learning_rate * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + settings_.epsilon);
  }
}

std::uint64_t stage_seed(std::uint64_t root, std::size_t index) {
  return substream_seed(root, "stage-" + std::to_string(index));
}

namespace {

std::string describe_batch(std::span<const prompts::PromptInstance> batch) {
  std::string ids;
  for (std::size_t i = 0; i < batch.size() && i < 8; ++i) ids += (i ? "," : "") + batch[i].example_id;
  if (batch.size() > 8) ids += ",...";
  return ids;
}

}  // namespace

Checkpoint train_stage(Stage stage, const corpus::SplitSpec& split, const TrainConfig& config) {
  config.validate();
  if (split.train.empty()) throw Error("train_stage: empty training set");
  Model& model = stage.model;
  if (!model.encoder || !model.tokenizer) throw Error("train_stage: model not initialised");
  const bool fixed = model.head_kind == HeadKind::Fixed;

  const auto train = prompts::batch_render(model.pattern, split.train.examples(), *model.tokenizer, config.max_len);
  std::vector<std::array<double, 3>> soft;
  if (stage.teacher) {
    const Model& teacher = *stage.teacher;
    const auto rendered =
        prompts::batch_render(teacher.pattern, split.train.examples(), *teacher.tokenizer, teacher.max_len);
    for (const auto& z : model_logits(teacher, rendered.instances))
      soft.push_back(verbalizer::softmax(z, config.temperature).probs);
  }
  const double lambda = stage.teacher ? config.lambda : 1.0;

  encoder::AdamSettings settings;
  settings.learning_rate = config.learning_rate;
  Adam adam(model.parameters(), settings);
  Rng dropout_rng = substream(stage.seed, "dropout");

  const std::size_t n = split.train.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  Checkpoint result;
  result.stage_index = stage.index;
  result.pattern_id = model.pattern.id();
  result.config = config;
  result.seed = stage.seed;
  std::optional<Model> best;
  double best_metric = -std::numeric_limits<double>::infinity();
  std::size_t stale = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng shuffle = substream(stage.seed, "batches/epoch-" + std::to_string(epoch));
    std::shuffle(order.begin(), order.end(), shuffle);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t size = std::min(config.batch_size, n - start);
      std::vector<prompts::PromptInstance> batch;
      batch.reserve(size);
      for (std::size_t i = 0; i < size; ++i) batch.push_back(train.instances[order[start + i]]);

      model.zero_grad();
      const auto outputs = model.encoder->forward_train(batch, fixed ? &model.label_words : nullptr);
      std::vector<OutputGrad> grads(size);
      double batch_loss = 0.0;
      const double scale = 1.0 / static_cast<double>(size);
      for (std::size_t i = 0; i < size; ++i) {
        const std::size_t ex = order[start + i];
        verbalizer::HeadTape tape;
        std::array<double, 3> logits{};
        if (fixed) {
          logits = *outputs[i].label_scores;
        } else {
          tape = verbalizer::head_forward(outputs[i], batch[i], model.head, config.dropout, &dropout_rng);
          logits = tape.logits;
        }
        LogitLoss loss;
        try {
          loss = logit_loss(logits, split.train[ex].label,
                            stage.teacher ? std::optional(soft[ex]) : std::nullopt, lambda, config.temperature);
        } catch (const NumericError&) {
          loss.total = std::numeric_limits<double>::quiet_NaN();
        }
        if (!std::isfinite(loss.total))
          throw NumericError("stage " + std::to_string(stage.index) + " (" + model.pattern.id() + "), epoch " +
                             std::to_string(epoch) + ", batch " + std::to_string(batches) +
                             ": non-finite loss on example '" + batch[i].example_id + "' [batch: " +
                             describe_batch(batch) + "]");
        batch_loss += loss.total;
        std::array<double, 3> g{};
        for (std::size_t c = 0; c < 3; ++c) g[c] = loss.grad[c] * scale;
        if (fixed) {
          grads[i].hidden = Matrix::Zero(outputs[i].hidden.rows(), outputs[i].hidden.cols());
          grads[i].label_scores = g;
        } else {
          grads[i].hidden = verbalizer::head_backward(tape, g, model.head);
        }
      }
      model.encoder->backward(grads);
      adam.step();
      model.encoder->external_step(settings, adam.steps());
      loss_sum += batch_loss;
      ++batches;
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(batches);
    if (!split.validation.empty()) {
      const auto preds = predict(model, split.validation.examples(), config.batch_size);
      const auto records = to_records(split.validation.examples(), preds);
      record.val_metric = evalkit::macro_micro(records).mic_f_avg;
    }
    result.history.push_back(record);
    spdlog::debug("stage {} {} epoch {}: loss {:.6f}{}", stage.index, model.pattern.id(), epoch, record.train_loss,
                  record.val_metric ? fmt::format(", val MicF {:.4f}", *record.val_metric) : std::string());

    if (!record.val_metric) continue;
    if (*record.val_metric > best_metric) {
      best_metric = *record.val_metric;
      best = model.clone();
      result.epoch = epoch;
      result.val_metric = best_metric;
      stale = 0;
    } else if (++stale >= config.patience) {
      spdlog::debug("stage {}: early stop after epoch {}", stage.index, epoch);
      break;
    }
  }

  if (best) {
    result.model = std::make_shared<const Model>(std::move(*best));
  } else {
    result.epoch = result.history.back().epoch;
    result.model = std::make_shared<const Model>(std::move(model));
  }
  return result;
}

nlohmann::json RunManifest::to_json() const {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : per_stage) {
    nlohmann::json history = nlohmann::json::array();
    for (const auto& h : s.history)
      history.push_back({{"epoch", h.epoch},
                         {"train_loss", h.train_loss},
                         {"val_metric", h.val_metric ? nlohmann::json(*h.val_metric) : nlohmann::json(nullptr)}});
    stages.push_back({{"index", s.index},
                      {"pattern", s.pattern},
                      {"best_epoch", s.best_epoch},
                      {"val_metric", s.val_metric ? nlohmann::json(*s.val_metric) : nlohmann::json(nullptr)},
                      {"checkpoint_path", s.checkpoint_path},
                      {"history", history}});
  }
  nlohmann::json j = {{"run_id", run_id},
                      {"command", command},
                      {"created", created},
                      {"status", status},
                      {"config", config},
                      {"prompt_order", prompt_order},
                      {"data_fingerprints", data_fingerprints},
                      {"per_stage", stages},
                      {"final_metrics", final_metrics},
                      {"seeds", seeds},
                      {"wall_clock", wall_clock_seconds},
                      {"tool_version", tool_version}};
  if (!error.empty()) j["error"] = error;
  return j;
}

void RunManifest::write(const std::filesystem::path& path) const {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write " + tmp.string());
    out << to_json().dump(2) << "\n";
  }
  std::filesystem::rename(tmp, path);
}

ChainResult run_distillation_chain(std::span<const std::string> prompt_order, const prompts::PatternRegistry& registry,
                                   const corpus::SplitSpec& split, const TrainConfig& config,
                                   const ModelFactory& factory, const ChainOptions& options) {
  if (prompt_order.empty()) throw Error("prompt order is empty");
  config.validate();
  std::vector<prompts::PromptPattern> patterns;
  for (const auto& id : prompt_order) patterns.push_back(registry.get(id));
  if (options.manifest) options.manifest->prompt_order.assign(prompt_order.begin(), prompt_order.end());

  ChainResult result;
  std::shared_ptr<const Model> teacher;
  for (std::size_t k = 0; k < patterns.size(); ++k) {
    const std::uint64_t seed = stage_seed(config.seed, k);
    try {
      Stage stage;
      stage.index = k;
      stage.seed = seed;
      stage.teacher = teacher;
      if (k == 0 || config.fresh_student) {
        stage.model = factory(patterns[k], seed);
      } else {
        stage.model = teacher->clone();
        stage.model.pattern = patterns[k];
      }
      spdlog::info("stage {}/{}: pattern {}{}", k + 1, patterns.size(), patterns[k].id(),
                   teacher ? " (teacher " + teacher->pattern.id() + ")" : std::string());
      Checkpoint ckpt = train_stage(std::move(stage), split, config);
      if (options.manifest) ckpt.run_id = options.manifest->run_id;
      if (options.checkpoint_dir) {
        std::filesystem::create_directories(*options.checkpoint_dir);
        ckpt.path = *options.checkpoint_dir / ("stage-" + std::to_string(k + 1) + "-" + patterns[k].id() + ".ckpt");
        save_checkpoint(ckpt, ckpt.path);
      }
      teacher = ckpt.model;
      if (options.manifest) {
        options.manifest->per_stage.push_back(
            {k, patterns[k].id(), ckpt.epoch, ckpt.val_metric, ckpt.path.string(), ckpt.history});
        if (options.on_progress) options.on_progress(*options.manifest);
      }
      result.stages.push_back(std::move(ckpt));
    } catch (const std::exception& e) {
      if (options.manifest) {
        options.manifest->status = "failed";
        options.manifest->error = "stage " + std::to_string(k + 1) + " (" + patterns[k].id() + "): " + e.what();
        if (options.on_progress) options.on_progress(*options.manifest);
      }
      throw;
    }
  }
  result.final = result.stages.back();
  return result;
}

}  // namespace tapd::trainer
