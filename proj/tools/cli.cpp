// Copyright 2026 The tapd Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <openssl/evp.h>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

#include "tapd/backends.hpp"
#include "tapd/csv.hpp"
#include "tapd/error.hpp"
#include "tapd/introspect.hpp"
#include "tapd/random.hpp"

#ifndef TAPD_VERSION
#define TAPD_VERSION "0.0.0"
#endif

namespace tapd::cli {

using nlohmann::json;

// ---------------------------------------------------------------- config

json default_config_json() {
  const RunConfig d;
  json train = trainer::to_json(d.train);
  train.erase("seed");
  return {{"seed", d.seed},
          {"backend", d.backend},
          {"prompt_order", d.prompt_order},
          {"patterns_file", ""},
          {"data",
           {{"format", d.data.format},
            {"train", ""},
            {"validation", ""},
            {"test", ""},
            {"splits", ""},
            {"synthetic",
             {{"num_targets", d.data.synthetic.num_targets},
              {"train_size", d.data.synthetic.train_size},
              {"test_size", d.data.synthetic.test_size},
              {"min_words", d.data.synthetic.min_words},
              {"max_words", d.data.synthetic.max_words},
              {"seed", d.data.synthetic.seed}}}}},
          {"stub",
           {{"d_h", d.stub.d_h},
            {"max_positions", d.stub.max_positions},
            {"vocab_size", d.stub.vocab_size},
            {"seed", d.stub.seed}}},
          {"pretrained", {{"dtype", d.pretrained_dtype}}},
          {"train", train},
          {"fewshot", {{"k", d.fewshot_k}, {"repeats", d.repeats}}},
          {"cross_target", {{"source", ""}, {"destination", ""}}}};
}

namespace {

std::string join_path(const std::string& parent, const std::string& key) {
  return parent.empty() ? key : parent + "." + key;
}

void check_type(const json& slot, const json& value, const std::string& path) {
  const bool ok = slot.is_null()     ? (value.is_null() || value.is_array())
                  : slot.is_number() ? value.is_number()
                  : slot.is_string() ? value.is_string()
                  : slot.is_boolean() ? value.is_boolean()
                  : slot.is_array()  ? value.is_array()
                                     : false;
  if (!ok) {
    const char* want = slot.is_null() ? "a list or null"
                       : slot.is_number() ? "a number"
                       : slot.is_string() ? "a string"
                       : slot.is_boolean() ? "true or false"
                                           : "a list";
    throw ConfigError(path, std::string("expected ") + want + ", found " + value.type_name());
  }
}

void overlay(json& base, const json& over, const std::string& path) {
  if (!over.is_object()) throw ConfigError(path.empty() ? "config" : path, "expected an object");
  for (const auto& [key, value] : over.items()) {
    const std::string p = join_path(path, key);
    if (!base.contains(key)) throw ConfigError(p, "unknown field");
    json& slot = base[key];
    if (slot.is_object())
      overlay(slot, value, p);
    else {
      check_type(slot, value, p);
      slot = value;
    }
  }
}

template <typename T>
T unsigned_field(const json& j, const std::string& path) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<std::int64_t>() >= 0)) throw ConfigError(path, "expected a nonnegative integer");
  return j.get<T>();
}

std::filesystem::path resolve(const std::string& p, const std::filesystem::path& base) {
  if (p.empty()) return {};
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : std::filesystem::absolute(base / path).lexically_normal();
}

void collect_leaves(const json& j, const std::string& path, std::vector<std::pair<std::string, const json*>>& out) {
  for (const auto& [key, value] : j.items()) {
    const std::string p = join_path(path, key);
    if (value.is_object())
      collect_leaves(value, p, out);
    else
      out.emplace_back(p, &value);
  }
}

}  // namespace

RunConfig parse_config(const json& doc, const std::filesystem::path& base_dir) {
  json j = default_config_json();
  overlay(j, doc, "");
  RunConfig c;
  c.seed = unsigned_field<std::uint64_t>(j["seed"], "seed");
  c.backend = j["backend"].get<std::string>();
  try {
    encoder::BackendSpec::parse(c.backend);
  } catch (const Error& e) {
    throw ConfigError("backend", e.what());
  }
  c.prompt_order.clear();
  for (const auto& p : j["prompt_order"]) {
    if (!p.is_string()) throw ConfigError("prompt_order", "expected pattern ids");
    c.prompt_order.push_back(p.get<std::string>());
  }
  if (c.prompt_order.empty()) throw ConfigError("prompt_order", "must name at least one pattern");
  c.patterns_file = resolve(j["patterns_file"].get<std::string>(), base_dir);

  const json& d = j["data"];
  c.data.format = d["format"].get<std::string>();
  static const std::vector<std::string> formats = {"semeval", "ukp", "csv", "synthetic", "synthetic-semeval",
                                                   "synthetic-ukp"};
  if (std::find(formats.begin(), formats.end(), c.data.format) == formats.end())
    throw ConfigError("data.format", "unknown format '" + c.data.format +
                                         "' (semeval, ukp, csv, synthetic, synthetic-semeval, synthetic-ukp)");
  c.data.train = resolve(d["train"].get<std::string>(), base_dir);
  c.data.validation = resolve(d["validation"].get<std::string>(), base_dir);
  c.data.test = resolve(d["test"].get<std::string>(), base_dir);
  c.data.splits = resolve(d["splits"].get<std::string>(), base_dir);
  const json& s = d["synthetic"];
  c.data.synthetic.num_targets = unsigned_field<std::size_t>(s["num_targets"], "data.synthetic.num_targets");
  c.data.synthetic.train_size = unsigned_field<std::size_t>(s["train_size"], "data.synthetic.train_size");
  c.data.synthetic.test_size = unsigned_field<std::size_t>(s["test_size"], "data.synthetic.test_size");
  c.data.synthetic.min_words = unsigned_field<std::size_t>(s["min_words"], "data.synthetic.min_words");
  c.data.synthetic.max_words = unsigned_field<std::size_t>(s["max_words"], "data.synthetic.max_words");
  c.data.synthetic.seed = unsigned_field<std::uint64_t>(s["seed"], "data.synthetic.seed");
  if (c.data.synthetic.num_targets == 0 || c.data.synthetic.num_targets > 8)
    throw ConfigError("data.synthetic.num_targets", "must lie in 1..8");
  if (c.data.synthetic.min_words == 0 || c.data.synthetic.min_words > c.data.synthetic.max_words)
    throw ConfigError("data.synthetic.min_words", "must be positive and at most max_words");

  const json& st = j["stub"];
  c.stub.d_h = unsigned_field<std::size_t>(st["d_h"], "stub.d_h");
  c.stub.max_positions = unsigned_field<std::size_t>(st["max_positions"], "stub.max_positions");
  c.stub.vocab_size = unsigned_field<std::size_t>(st["vocab_size"], "stub.vocab_size");
  c.stub.seed = unsigned_field<std::uint64_t>(st["seed"], "stub.seed");
  if (c.stub.d_h == 0) throw ConfigError("stub.d_h", "must be positive");
  if (c.stub.max_positions == 0) throw ConfigError("stub.max_positions", "must be positive");
  if (c.stub.vocab_size < 16) throw ConfigError("stub.vocab_size", "must be at least 16");
  c.pretrained_dtype = j["pretrained"]["dtype"].get<std::string>();
  if (c.pretrained_dtype != "float32" && c.pretrained_dtype != "float64")
    throw ConfigError("pretrained.dtype", "expected float32 or float64");

  c.train = trainer::train_config_from_json(j["train"], "train");
  c.train.seed = substream_seed(c.seed, "train");

  c.fewshot_k.clear();
  for (const auto& k : j["fewshot"]["k"]) {
    const auto v = unsigned_field<std::size_t>(k, "fewshot.k");
    if (v == 0) throw ConfigError("fewshot.k", "k must be at least 1");
    c.fewshot_k.push_back(v);
  }
  c.repeats = unsigned_field<std::size_t>(j["fewshot"]["repeats"], "fewshot.repeats");
  if (c.repeats == 0) throw ConfigError("fewshot.repeats", "must be positive");
  c.source = j["cross_target"]["source"].get<std::string>();
  c.destination = j["cross_target"]["destination"].get<std::string>();
  return c;
}

json to_json(const RunConfig& c) {
  json train = trainer::to_json(c.train);
  train.erase("seed");
  return {{"seed", c.seed},
          {"backend", c.backend},
          {"prompt_order", c.prompt_order},
          {"patterns_file", c.patterns_file.string()},
          {"data",
           {{"format", c.data.format},
            {"train", c.data.train.string()},
            {"validation", c.data.validation.string()},
            {"test", c.data.test.string()},
            {"splits", c.data.splits.string()},
            {"synthetic",
             {{"num_targets", c.data.synthetic.num_targets},
              {"train_size", c.data.synthetic.train_size},
              {"test_size", c.data.synthetic.test_size},
              {"min_words", c.data.synthetic.min_words},
              {"max_words", c.data.synthetic.max_words},
              {"seed", c.data.synthetic.seed}}}}},
          {"stub",
           {{"d_h", c.stub.d_h},
            {"max_positions", c.stub.max_positions},
            {"vocab_size", c.stub.vocab_size},
            {"seed", c.stub.seed}}},
          {"pretrained", {{"dtype", c.pretrained_dtype}}},
          {"train", train},
          {"fewshot", {{"k", c.fewshot_k}, {"repeats", c.repeats}}},
          {"cross_target", {{"source", c.source}, {"destination", c.destination}}}};
}

json apply_env_overrides(json config, const EnvLookup& env) {
  const json defaults = default_config_json();
  std::vector<std::pair<std::string, const json*>> leaves;
  collect_leaves(defaults, "", leaves);
  for (const auto& [path, slot] : leaves) {
    std::string name = "TAPD_" + path;
    for (char& ch : name) ch = ch == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    const auto raw = env(name);
    if (!raw) continue;
    json value;
    if (slot->is_string()) {
      value = *raw;
    } else {
      try {
        value = json::parse(*raw);
      } catch (const json::parse_error&) {
        if (!slot->is_array() && !slot->is_null()) throw ConfigError(path, "cannot parse " + name + "='" + *raw + "'");
        value = json::array();
        std::stringstream ss(*raw);
        for (std::string item; std::getline(ss, item, ',');) {
          const bool numeric = slot->is_array() && !slot->empty() && slot->front().is_number();
          value.push_back(numeric ? json(std::stoull(item)) : json(item));
        }
      }
    }
    std::string pointer = "/" + path;
    std::replace(pointer.begin(), pointer.end(), '.', '/');
    config[json::json_pointer(pointer)] = value;
  }
  return config;
}

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    const char* v = std::getenv(name.c_str());
    return v ? std::optional<std::string>(v) : std::nullopt;
  };
}

RunConfig load_config(const std::optional<std::filesystem::path>& path, const EnvLookup& env) {
  json doc = json::object();
  std::filesystem::path base = std::filesystem::current_path();
  if (path) {
    if (!std::filesystem::exists(*path)) throw ConfigError("--config", "no such file: " + path->string());
    try {
      doc = json::parse(csv::read_file(*path));
    } catch (const json::parse_error& e) {
      throw ConfigError(path->string(), std::string("invalid JSON: ") + e.what());
    }
    base = std::filesystem::absolute(*path).parent_path();
  }
  return parse_config(apply_env_overrides(std::move(doc), env), base);
}

// ---------------------------------------------------------------- data

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 computation failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 15]);
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(csv::read_file(path)); }

namespace {

std::filesystem::path require_file(const std::filesystem::path& p, const std::string& field, const std::string& format) {
  if (p.empty()) throw ConfigError(field, "required for data.format " + format);
  if (!std::filesystem::exists(p)) throw ConfigError(field, "no such file: " + p.string());
  return p;
}

std::string dataset_hash(const corpus::Dataset& d) {
  std::ostringstream out;
  corpus::write_generic_csv(out, d);
  return sha256_hex(out.str());
}

}  // namespace

LoadedData load_data(const RunConfig& config) {
  LoadedData out;
  const auto& d = config.data;
  auto& split = out.split;
  if (d.format == "synthetic") {
    split = corpus::synthetic::keyword_corpus(d.synthetic);
  } else if (d.format == "synthetic-semeval") {
    split = corpus::synthetic::semeval_shaped(d.synthetic.seed);
  } else if (d.format == "synthetic-ukp") {
    split = corpus::synthetic::ukp_shaped(d.synthetic.seed);
  } else if (d.format == "ukp") {
    split = corpus::load_ukp_splits(require_file(d.splits, "data.splits", d.format));
    out.fingerprints["splits"] = sha256_file(d.splits);
  } else {
    const auto format = d.format == "semeval" ? corpus::Format::SemevalTsv : corpus::Format::GenericCsv;
    split.name = d.format;
    split.train = corpus::load_dataset(require_file(d.train, "data.train", d.format), format);
    split.test = corpus::load_dataset(require_file(d.test, "data.test", d.format), format);
    out.fingerprints["train"] = sha256_file(d.train);
    out.fingerprints["test"] = sha256_file(d.test);
    if (!d.validation.empty()) {
      split.validation = corpus::load_dataset(require_file(d.validation, "data.validation", d.format), format);
      out.fingerprints["validation"] = sha256_file(d.validation);
    }
    split.provenance = "files";
  }
  if (d.format.rfind("synthetic", 0) == 0) {
    out.fingerprints["train"] = dataset_hash(split.train);
    out.fingerprints["test"] = dataset_hash(split.test);
    if (!split.validation.empty()) out.fingerprints["validation"] = dataset_hash(split.validation);
  }
  if (split.validation.empty()) {
    const auto carved = corpus::split_train_val(split.train, {}, substream_seed(config.seed, "split"));
    split.train = carved.train;
    split.validation = carved.validation;
    split.provenance += "; validation carved 5:1 from train (" + carved.provenance + ")";
  }
  if (split.train.empty()) throw ConfigError("data", "training set is empty");
  if (split.test.empty()) throw ConfigError("data", "test set is empty");
  return out;
}

// ---------------------------------------------------------------- runs

std::string run_id(const std::string& command, const json& config) {
  return command + "-" + sha256_hex(command + "\n" + config.dump()).substr(0, 12);
}

namespace {

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

prompts::PatternRegistry make_registry(const RunConfig& c) {
  prompts::PatternRegistry reg;
  if (!c.patterns_file.empty()) reg.load_file(c.patterns_file);
  for (const auto& id : c.prompt_order)
    if (!reg.contains(id)) throw ConfigError("prompt_order", "unknown pattern '" + id + "'");
  return reg;
}

struct Backend {
  std::shared_ptr<const Tokenizer> tokenizer;
  std::shared_ptr<const encoder::Encoder> base;
};

/// For the stub the vocabulary comes from the training-side texts plus every
/// word the prompts and verbalizer need.
Backend make_backend(const RunConfig& c, const prompts::PatternRegistry& reg,
                     std::span<const corpus::Dataset* const> sources, std::span<const std::string> extra_targets = {}) {
  const auto spec = encoder::BackendSpec::parse(c.backend);
  Backend b;
  if (spec.kind == encoder::BackendSpec::Kind::Pretrained) {
    encoder::PretrainedOptions opts;
    opts.dtype = c.pretrained_dtype;
    auto loaded = encoder::load_pretrained(spec.identifier, opts);
    b.tokenizer = loaded.tokenizer;
    b.base = std::move(loaded.encoder);
    return b;
  }
  std::vector<std::string> texts;
  for (const corpus::Dataset* d : sources)
    for (const auto& ex : d->examples()) {
      texts.push_back(ex.text);
      texts.push_back(ex.target);
    }
  texts.insert(texts.end(), extra_targets.begin(), extra_targets.end());
  for (const auto& id : c.prompt_order)
    for (const auto& seg : reg.get(id).segments())
      if (seg.kind == prompts::SegmentKind::Literal) texts.push_back(seg.literal);
  texts.insert(texts.end(), c.train.label_words.begin(), c.train.label_words.end());
  if (c.train.stance_seed_words)
    texts.insert(texts.end(), c.train.stance_seed_words->begin(), c.train.stance_seed_words->end());
  b.tokenizer = std::make_shared<const Tokenizer>(Tokenizer::build(texts, c.stub.vocab_size));
  encoder::StubOptions opts;
  opts.d_h = c.stub.d_h;
  opts.max_positions = c.stub.max_positions;
  opts.seed = c.stub.seed;
  b.base = std::make_shared<const encoder::StubEncoder>(*b.tokenizer, opts);
  return b;
}

trainer::RunManifest start_manifest(const std::string& command, const RunConfig& c, const std::filesystem::path& out) {
  std::filesystem::create_directories(out);
  trainer::RunManifest m;
  m.config = to_json(c);
  m.command = command;
  m.run_id = run_id(command, m.config);
  m.created = utc_now();
  m.prompt_order = c.prompt_order;
  m.tool_version = TAPD_VERSION;
  m.seeds = {{"root", c.seed},
             {"split", substream_seed(c.seed, "split")},
             {"train", c.train.seed},
             {"stub", c.stub.seed},
             {"synthetic", c.data.synthetic.seed}};
  m.write(out / "manifest.json");
  return m;
}

/// Runs `body`, then finalises the manifest as completed or failed.
template <typename Body>
void supervised(trainer::RunManifest& m, const std::filesystem::path& out, Body&& body) {
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
  try {
    body();
    m.status = "completed";
    m.wall_clock_seconds = elapsed();
    m.write(out / "manifest.json");
  } catch (const std::exception& e) {
    m.status = "failed";
    if (m.error.empty()) m.error = e.what();
    m.wall_clock_seconds = elapsed();
    m.write(out / "manifest.json");
    throw;
  }
}

json stage_metrics(const trainer::RunManifest& m) {
  json out = json::array();
  for (const auto& s : m.per_stage)
    out.push_back({{"pattern", s.pattern},
                   {"best_epoch", s.best_epoch},
                   {"val_MicF_avg", s.val_metric ? json(*s.val_metric) : json(nullptr)}});
  return out;
}

evalkit::EvalReport evaluate(const trainer::Model& model, const corpus::Dataset& test, std::size_t batch_size,
                             std::vector<evalkit::PredictionRecord>* records_out = nullptr) {
  const auto preds = trainer::predict(model, test.examples(), batch_size);
  auto records = trainer::to_records(test.examples(), preds);
  auto report = evalkit::macro_micro(records);
  if (records_out) *records_out = std::move(records);
  return report;
}

}  // namespace

TrainOutcome cmd_train(const RunConfig& c, const std::filesystem::path& out) {
  TrainOutcome result;
  result.out_dir = out;
  auto& m = result.manifest;
  m = start_manifest("train", c, out);
  supervised(m, out, [&] {
    const auto data = load_data(c);
    m.data_fingerprints = data.fingerprints;
    m.write(out / "manifest.json");
    const auto reg = make_registry(c);
    const corpus::Dataset* sources[] = {&data.split.train, &data.split.validation};
    const auto backend = make_backend(c, reg, sources);
    const auto factory = trainer::base_model_factory(backend.tokenizer, backend.base, c.train);
    trainer::ChainOptions opts;
    opts.checkpoint_dir = out / "checkpoints";
    opts.manifest = &m;
    opts.on_progress = [&](const trainer::RunManifest& mm) { mm.write(out / "manifest.json"); };
    const auto chain = trainer::run_distillation_chain(c.prompt_order, reg, data.split, c.train, factory, opts);

    std::vector<evalkit::PredictionRecord> records;
    result.report = evaluate(*chain.final.model, data.split.test, c.train.batch_size, &records);
    evalkit::save_predictions(out / "predictions.csv", records);
    const json metrics = {{"command", "train"},
                          {"prompt_order", c.prompt_order},
                          {"stages", stage_metrics(m)},
                          {"test", evalkit::to_json(result.report)}};
    write_text(out / "metrics.json", metrics.dump(2) + "\n");
    write_text(out / "report.txt", evalkit::render_table(result.report));
    m.final_metrics = {{"MacF_avg", result.report.mac_f_avg}, {"MicF_avg", result.report.mic_f_avg}};
  });
  return result;
}

FewShotOutcome cmd_fewshot(const RunConfig& c, const std::filesystem::path& out) {
  FewShotOutcome result;
  auto& m = result.manifest;
  m = start_manifest("fewshot", c, out);
  supervised(m, out, [&] {
    const auto data = load_data(c);
    m.data_fingerprints = data.fingerprints;
    m.write(out / "manifest.json");
    const auto reg = make_registry(c);
    const corpus::Dataset* sources[] = {&data.split.train, &data.split.validation};
    const auto backend = make_backend(c, reg, sources);

    json cells = json::array();
    for (std::size_t k : c.fewshot_k) {
      std::vector<evalkit::EvalReport> reports;
      for (std::size_t r = 0; r < c.repeats; ++r) {
        FewShotCell cell;
        cell.k = k;
        cell.repeat = r;
        const std::string tag = "fewshot/k=" + std::to_string(k) + "/repeat=" + std::to_string(r);
        try {
          corpus::SplitSpec split = data.split;
          split.train = corpus::sample_few_shot(data.split.train, k, substream_seed(c.seed, tag + "/sample"));
          cell.train_size = split.train.size();
          trainer::TrainConfig tc = c.train;
          tc.seed = substream_seed(c.seed, tag + "/train");
          const auto factory = trainer::base_model_factory(backend.tokenizer, backend.base, tc);
          const auto chain = trainer::run_distillation_chain(c.prompt_order, reg, split, tc, factory);
          cell.report = evaluate(*chain.final.model, split.test, tc.batch_size);
          reports.push_back(*cell.report);
          spdlog::info("k={} repeat {}: MacF {} MicF {}", k, r + 1, evalkit::percent(cell.report->mac_f_avg),
                       evalkit::percent(cell.report->mic_f_avg));
        } catch (const std::exception& e) {
          cell.error = e.what();
          spdlog::error("k={} repeat {} failed: {}", k, r + 1, e.what());
        }
        cells.push_back({{"k", k},
                         {"repeat", r},
                         {"train_size", cell.train_size},
                         {"report", cell.report ? evalkit::to_json(*cell.report) : json(nullptr)},
                         {"error", cell.error.empty() ? json(nullptr) : json(cell.error)}});
        result.cells.push_back(std::move(cell));
      }
      if (!reports.empty()) result.aggregates[k] = evalkit::aggregate_runs(reports);
    }

    std::ostringstream table;
    table << "Train data   MacF_avg          MicF_avg          Runs\n";
    json aggregates = json::array();
    for (std::size_t k : c.fewshot_k) {
      std::size_t size = 0;
      std::size_t failed = 0;
      for (const auto& cell : result.cells)
        if (cell.k == k) {
          size = std::max(size, cell.train_size);
          failed += cell.report ? 0 : 1;
        }
      std::string row = "(" + std::to_string(size) + ")";
      row.resize(std::max<std::size_t>(row.size() + 1, 13), ' ');
      auto it = result.aggregates.find(k);
      if (it == result.aggregates.end()) {
        table << row << "failed\n";
      } else {
        std::string mac = evalkit::format_summary(it->second.metrics.at("MacF_avg"));
        std::string mic = evalkit::format_summary(it->second.metrics.at("MicF_avg"));
        table << row << mac << std::string(mac.size() < 18 ? 18 - mac.size() : 1, ' ') << mic
              << std::string(mic.size() < 18 ? 18 - mic.size() : 1, ' ') << it->second.runs
              << (failed ? " (" + std::to_string(failed) + " failed)" : std::string()) << "\n";
      }
      aggregates.push_back({{"k", k},
                            {"train_size", size},
                            {"failed", failed},
                            {"aggregate", it == result.aggregates.end() ? json(nullptr) : evalkit::to_json(it->second)}});
    }
    result.table = table.str();
    write_text(out / "report.txt", result.table);
    write_text(out / "metrics.json",
               json({{"command", "fewshot"}, {"cells", cells}, {"aggregates", aggregates}}).dump(2) + "\n");
    m.final_metrics = aggregates;
  });
  return result;
}

CrossTargetOutcome cmd_cross_target(const RunConfig& c, const std::filesystem::path& out) {
  CrossTargetOutcome result;
  auto& m = result.manifest;
  m = start_manifest("cross-target", c, out);
  supervised(m, out, [&] {
    if (c.source.empty()) throw ConfigError("cross_target.source", "required (or pass --source)");
    if (c.destination.empty()) throw ConfigError("cross_target.destination", "required (or pass --destination)");
    const auto data = load_data(c);
    m.data_fingerprints = data.fingerprints;
    const corpus::Dataset parts[] = {data.split.train, data.split.validation, data.split.test};
    const auto pooled = corpus::concat("pooled", parts);
    result.source = corpus::resolve_target(c.source, pooled.targets());
    result.destination = corpus::resolve_target(c.destination, pooled.targets());
    result.in_target = result.source == result.destination;
    const auto task = corpus::make_cross_target_task(pooled.filter_target(result.source),
                                                     pooled.filter_target(result.destination));
    m.write(out / "manifest.json");
    const auto reg = make_registry(c);
    const corpus::Dataset* sources[] = {&task.train};
    const std::string targets[] = {result.destination};
    const auto backend = make_backend(c, reg, sources, targets);
    const auto factory = trainer::base_model_factory(backend.tokenizer, backend.base, c.train);
    trainer::ChainOptions opts;
    opts.checkpoint_dir = out / "checkpoints";
    opts.manifest = &m;
    opts.on_progress = [&](const trainer::RunManifest& mm) { mm.write(out / "manifest.json"); };
    const auto chain = trainer::run_distillation_chain(c.prompt_order, reg, task, c.train, factory, opts);
    std::vector<evalkit::PredictionRecord> records;
    result.report = evaluate(*chain.final.model, task.test, c.train.batch_size, &records);
    evalkit::save_predictions(out / "predictions.csv", records);
    const std::string cell = task.name;
    const std::size_t width =
        static_cast<std::size_t>(std::count_if(cell.begin(), cell.end(), [](char ch) { return (ch & 0xC0) != 0x80; }));
    const std::string text = "Task" + std::string(std::max<std::size_t>(width, 4) - 4 + 2, ' ') + "F_avg\n" + cell +
                             "  " + evalkit::percent(result.report.mic_f_avg) +
                             (result.in_target ? "  (in-target)" : "") + "\n";
    write_text(out / "report.txt", text);
    write_text(out / "metrics.json", json({{"command", "cross-target"},
                                           {"task", cell},
                                           {"provenance", task.provenance},
                                           {"in_target", result.in_target},
                                           {"F_avg", result.report.mic_f_avg},
                                           {"stages", stage_metrics(m)},
                                           {"test", evalkit::to_json(result.report)}})
                                         .dump(2) +
                                         "\n");
    m.final_metrics = {{"F_avg", result.report.mic_f_avg}, {"in_target", result.in_target}};
  });
  return result;
}

evalkit::EvalReport cmd_eval(const std::filesystem::path& predictions, const std::optional<std::filesystem::path>& gold,
                             corpus::Format gold_format, const std::optional<std::filesystem::path>& out_dir) {
  const auto preds = evalkit::read_predictions_csv(csv::read_file(predictions), predictions.string());
  std::vector<evalkit::PredictionRecord> records;
  if (gold) {
    const auto gold_data = corpus::load_dataset(*gold, gold_format);
    std::map<std::string, StanceLabel> by_id;
    for (const auto& p : preds)
      if (!by_id.emplace(p.example_id, p.predicted).second)
        throw Error(predictions.string() + ": duplicate id '" + p.example_id + "'");
    records = evalkit::align(gold_data.examples(), by_id);
  } else {
    for (const auto& p : preds)
      if (p.target.empty()) throw Error(predictions.string() + ": without --gold the file needs target and gold columns");
    records = preds;
  }
  const auto report = evalkit::macro_micro(records);
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    write_text(*out_dir / "metrics.json", json({{"command", "eval"}, {"test", evalkit::to_json(report)}}).dump(2) + "\n");
    write_text(*out_dir / "report.txt", evalkit::render_table(report));
  }
  return report;
}

std::string cmd_analyze(const AnalyzeOptions& o, const std::filesystem::path& out) {
  if (o.k == 0) throw ConfigError("--k", "must be at least 1");
  if (o.mode != "stance-words" && o.mode != "mask-words")
    throw ConfigError("--mode", "expected stance-words or mask-words");
  const auto space = o.space == "raw" ? introspect::StanceSpace::Raw : introspect::StanceSpace::Projected;
  if (o.space != "raw" && o.space != "projected") throw ConfigError("--space", "expected projected or raw");
  const auto ckpt = trainer::load_checkpoint(o.checkpoint);
  const auto data = corpus::load_dataset(o.data, o.format);
  const auto filter = introspect::VocabularyFilter::from_dataset(data, *ckpt.model->tokenizer);
  std::filesystem::create_directories(out);
  std::string text;
  json j;
  if (o.mode == "stance-words") {
    const auto table = introspect::stance_word_table(*ckpt.model, data, o.k, filter, space);
    text = introspect::render(table);
    j = {{"mode", o.mode}, {"k", o.k}, {"space", o.space}, {"rows", introspect::to_json(table)}};
  } else {
    const auto n = std::min(o.limit, data.size());
    const auto rows = introspect::mask_word_rows(*ckpt.model, data.examples().subspan(0, n), filter);
    text = introspect::render(rows);
    j = {{"mode", o.mode}, {"rows", introspect::to_json(rows)}};
  }
  write_text(out / "analysis.json", j.dump(2) + "\n");
  write_text(out / "report.txt", text);
  return text;
}

// ---------------------------------------------------------------- entry point

namespace {

/// Accepts the short names used in configs as well as the full format names.
corpus::Format format_flag(const std::string& name, const char* flag) {
  try {
    if (name == "csv") return corpus::Format::GenericCsv;
    if (name == "semeval") return corpus::Format::SemevalTsv;
    if (name == "ukp") return corpus::Format::UkpTsv;
    return corpus::parse_format(name);
  } catch (const Error& e) {
    throw ConfigError(flag, e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_logger_st("tapd");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");

  CLI::App app{"Target-aware prompt distillation for stance detection"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(TAPD_VERSION));
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error")->capture_default_str();

  std::optional<std::string> config_path, out_dir, backend, prompt_order, source, destination;
  std::optional<std::uint64_t> seed;
  std::optional<double> lambda, temperature;
  std::optional<std::string> k_list;
  std::optional<std::size_t> repeats;

  auto add_run_flags = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--seed", seed, "root seed");
    sub->add_option("--out-dir", out_dir, "output directory (default runs/<run id>)");
    sub->add_option("--backend", backend, "stub or pretrained:<identifier>");
    sub->add_option("--prompt-order", prompt_order, "comma-separated pattern ids, e.g. P1,P2,P3");
    sub->add_option("--lambda", lambda, "weight of the classification loss");
    sub->add_option("--temperature", temperature, "distillation temperature");
  };
  auto* train = app.add_subcommand("train", "train a distillation chain and evaluate on the test split");
  add_run_flags(train);
  auto* fewshot = app.add_subcommand("fewshot", "few-shot sweep over k and repeated samples");
  add_run_flags(fewshot);
  fewshot->add_option("--k", k_list, "comma-separated k values");
  fewshot->add_option("--repeats", repeats, "samples per k");
  auto* cross = app.add_subcommand("cross-target", "train on one target, evaluate on another");
  add_run_flags(cross);
  cross->add_option("--source", source, "source target name or code");
  cross->add_option("--destination", destination, "destination target name or code");

  std::string pred_path, gold_format = "csv", eval_out;
  std::optional<std::string> gold_path;
  auto* eval = app.add_subcommand("eval", "score a predictions CSV");
  eval->add_option("--predictions", pred_path, "CSV with id,predicted (and optionally target,gold)")->required();
  eval->add_option("--gold", gold_path, "gold dataset file");
  eval->add_option("--gold-format", gold_format, "semeval, ukp or csv")->capture_default_str();
  eval->add_option("--out-dir", eval_out, "write metrics.json and report.txt here");

  AnalyzeOptions analyze_opts;
  std::string analyze_format = "csv", analyze_out;
  auto* analyze = app.add_subcommand("analyze", "nearest words for stance vectors or mask states");
  analyze->add_option("--checkpoint", analyze_opts.checkpoint, "checkpoint archive")->required();
  analyze->add_option("--mode", analyze_opts.mode, "stance-words or mask-words")->required();
  analyze->add_option("--data", analyze_opts.data, "dataset supplying the vocabulary and examples")->required();
  analyze->add_option("--format", analyze_format, "semeval, ukp or csv")->capture_default_str();
  analyze->add_option("--k", analyze_opts.k, "words per cell")->capture_default_str();
  analyze->add_option("--limit", analyze_opts.limit, "examples for mask-words")->capture_default_str();
  analyze->add_option("--space", analyze_opts.space, "projected or raw")->capture_default_str();
  analyze->add_option("--out-dir", analyze_out, "output directory");

  std::optional<std::string> ingest_data, ingest_config;
  std::string ingest_format = "csv";
  auto* ingest = app.add_subcommand("ingest-check", "parse a dataset or config and print its label counts");
  ingest->add_option("--data", ingest_data, "dataset file");
  ingest->add_option("--format", ingest_format, "semeval, ukp or csv")->capture_default_str();
  ingest->add_option("--config", ingest_config, "check the data named by a config instead");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  spdlog::set_level(spdlog::level::from_str(log_level));

  auto run_config = [&]() {
    RunConfig c = load_config(config_path ? std::optional<std::filesystem::path>(*config_path) : std::nullopt,
                              process_env());
    if (seed) {
      c.seed = *seed;
      c.train.seed = substream_seed(c.seed, "train");
    }
    if (backend) {
      try {
        encoder::BackendSpec::parse(*backend);
      } catch (const Error& e) {
        throw ConfigError("--backend", e.what());
      }
      c.backend = *backend;
    }
    if (prompt_order) {
      c.prompt_order.clear();
      std::stringstream ss(*prompt_order);
      for (std::string id; std::getline(ss, id, ',');)
        if (!id.empty()) c.prompt_order.push_back(id);
      if (c.prompt_order.empty()) throw ConfigError("--prompt-order", "empty");
    }
    if (lambda) c.train.lambda = *lambda;
    if (temperature) c.train.temperature = *temperature;
    if (k_list) {
      c.fewshot_k.clear();
      std::stringstream ss(*k_list);
      for (std::string v; std::getline(ss, v, ',');) {
        std::size_t k = 0;
        try {
          k = std::stoul(v);
        } catch (const std::exception&) {
          throw ConfigError("--k", "not a number: '" + v + "'");
        }
        if (k == 0) throw ConfigError("--k", "k must be at least 1");
        c.fewshot_k.push_back(k);
      }
    }
    if (repeats) {
      if (*repeats == 0) throw ConfigError("--repeats", "must be positive");
      c.repeats = *repeats;
    }
    if (source) c.source = *source;
    if (destination) c.destination = *destination;
    c.train.validate();
    return c;
  };
  auto output_dir = [&](const std::string& command, const RunConfig& c) {
    return out_dir ? std::filesystem::path(*out_dir) : std::filesystem::path("runs") / run_id(command, to_json(c));
  };

  try {
    if (*train) {
      const auto c = run_config();
      const auto r = cmd_train(c, output_dir("train", c));
      std::cout << evalkit::render_table(r.report) << "outputs: " << r.out_dir.string() << "\n";
    } else if (*fewshot) {
      const auto c = run_config();
      const auto r = cmd_fewshot(c, output_dir("fewshot", c));
      std::cout << r.table;
      for (const auto& cell : r.cells)
        if (!cell.error.empty()) return 1;
    } else if (*cross) {
      const auto c = run_config();
      const auto dir = output_dir("cross-target", c);
      const auto r = cmd_cross_target(c, dir);
      std::cout << corpus::target_abbreviation(r.source) << "→" << corpus::target_abbreviation(r.destination) << "  "
                << evalkit::percent(r.report.mic_f_avg) << (r.in_target ? "  (in-target)" : "") << "\n";
    } else if (*eval) {
      const auto report =
          cmd_eval(pred_path, gold_path ? std::optional<std::filesystem::path>(*gold_path) : std::nullopt,
                   format_flag(gold_format, "--gold-format"),
                   eval_out.empty() ? std::nullopt : std::optional<std::filesystem::path>(eval_out));
      std::cout << evalkit::render_table(report);
    } else if (*analyze) {
      analyze_opts.format = format_flag(analyze_format, "--format");
      const std::filesystem::path dir =
          analyze_out.empty() ? std::filesystem::path(analyze_opts.checkpoint.string() + ".analysis") : std::filesystem::path(analyze_out);
      std::cout << cmd_analyze(analyze_opts, dir);
    } else if (*ingest) {
      if (ingest_config) {
        RunConfig c = load_config(std::filesystem::path(*ingest_config), process_env());
        const auto data = load_data(c);
        for (const auto* part : {&data.split.train, &data.split.validation, &data.split.test}) {
          std::cout << part->name() << ": " << part->size() << " examples\n";
        }
        for (const auto& [name, hash] : data.fingerprints) std::cout << "sha256 " << name << " " << hash << "\n";
      } else {
        if (!ingest_data) throw ConfigError("--data", "pass --data or --config");
        const auto fmt = format_flag(ingest_format, "--format");
        std::vector<corpus::Dataset> parts;
        if (fmt == corpus::Format::UkpTsv) {
          auto s = corpus::load_ukp_splits(*ingest_data);
          parts = {s.train, s.validation, s.test};
        } else {
          parts = {corpus::load_dataset(*ingest_data, fmt)};
        }
        for (const auto& d : parts) {
          std::cout << d.name() << ": " << d.size() << " examples\n";
          for (const auto& t : d.targets())
            std::cout << "  " << t << ": FAVOR " << d.count(t, StanceLabel::Favor) << ", AGAINST "
                      << d.count(t, StanceLabel::Against) << ", NONE " << d.count(t, StanceLabel::None) << "\n";
        }
        std::cout << "sha256 " << sha256_file(*ingest_data) << "\n";
      }
    }
  } catch (const ConfigError& e) {
    spdlog::error("configuration error: {}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}

}  // namespace tapd::cli
