// Copyright 2026 The tapd Authors
// SPDX-License-Identifier: Apache-2.0

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "tapd/backends.hpp"
#include "tapd/error.hpp"
#include "tapd/trainer.hpp"

namespace tapd::trainer {

using encoder::Matrix;
using encoder::Parameter;

namespace {

constexpr char kMagic[8] = {'T', 'A', 'P', 'D', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint archives assume a little-endian host");

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof value);
}

template <typename T>
T get(std::istream& in, const std::string& source) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof value)) throw Error(source + ": truncated checkpoint");
  return value;
}

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::optional<double> json_optional(const nlohmann::json& j) {
  return j.is_null() ? std::nullopt : std::optional<double>(j.get<double>());
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  if (!ckpt.model) throw Error("save_checkpoint: checkpoint has no model");
  const Model& model = *ckpt.model;

  auto enc_state = model.encoder->state();
  // Backends that keep weights in their own file hand us its location; the
  // file travels next to the archive.
  if (enc_state.meta.contains("state_file")) {
    const std::filesystem::path src = enc_state.meta["state_file"].get<std::string>();
    const std::filesystem::path dst = path.string() + ".encoder";
    std::filesystem::copy_file(src, dst, std::filesystem::copy_options::overwrite_existing);
    std::filesystem::remove(src);
    enc_state.meta["state_file"] = dst.filename().string();
  }

  std::vector<std::pair<std::string, const Matrix*>> tensors;
  for (const auto& [name, m] : enc_state.tensors) tensors.emplace_back(name, &m);
  if (model.head_kind == HeadKind::TargetAware)
    for (const Parameter* p : model.head.parameters()) tensors.emplace_back(p->name, &p->value);

  nlohmann::json directory = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, m] : tensors) {
    directory.push_back({{"name", name}, {"rows", m->rows()}, {"cols", m->cols()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(m->size());
  }

  nlohmann::json history = nlohmann::json::array();
  for (const auto& h : ckpt.history)
    history.push_back({{"epoch", h.epoch}, {"train_loss", h.train_loss}, {"val_metric", optional_json(h.val_metric)}});

  nlohmann::json header = {
      {"stage_index", ckpt.stage_index},
      {"pattern", {{"id", model.pattern.id()}, {"template", model.pattern.template_text()}}},
      {"val_metric", optional_json(ckpt.val_metric)},
      {"epoch", ckpt.epoch},
      {"history", history},
      {"config", to_json(ckpt.config)},
      {"seed", ckpt.seed},
      {"run_id", ckpt.run_id},
      {"tokenizer",
       {{"vocabulary", model.tokenizer->vocabulary()}, {"fingerprint", std::to_string(model.tokenizer->fingerprint())}}},
      {"encoder", {{"identifier", model.encoder->spec().identifier}, {"meta", enc_state.meta}}},
      {"head",
       {{"kind", to_string(model.head_kind)},
        {"label_words", model.label_words},
        {"d_h", model.encoder->spec().d_h},
        {"d_m", model.head_kind == HeadKind::TargetAware ? model.head.d_m() : 0},
        {"max_len", model.max_len}}},
      {"tensors", directory}};
  const std::string text = header.dump();

  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kVersion);
    put<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, m] : tensors)
      out.write(reinterpret_cast<const char*>(m->data()), static_cast<std::streamsize>(m->size() * sizeof(double)));
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string source = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + source);
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw Error(source + ": not a tapd checkpoint");
  const auto version = get<std::uint32_t>(in, source);
  if (version != kVersion) throw Error(source + ": unsupported checkpoint version " + std::to_string(version));
  const auto header_size = get<std::uint64_t>(in, source);
  std::string text(header_size, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_size))) throw Error(source + ": truncated header");
  const auto header = nlohmann::json::parse(text);

  std::map<std::string, Matrix> tensors;
  for (const auto& entry : header["tensors"]) {
    Matrix m(entry["rows"].get<Eigen::Index>(), entry["cols"].get<Eigen::Index>());
    if (!in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double))))
      throw Error(source + ": truncated tensor " + entry["name"].get<std::string>());
    tensors.emplace(entry["name"].get<std::string>(), std::move(m));
  }

  auto tokenizer = std::make_shared<const Tokenizer>(header["tokenizer"]["vocabulary"].get<std::vector<std::string>>());
  if (std::to_string(tokenizer->fingerprint()) != header["tokenizer"]["fingerprint"].get<std::string>())
    throw Error(source + ": tokenizer fingerprint does not match the stored vocabulary");

  const auto& pat = header["pattern"];
  auto pattern = prompts::PromptPattern::parse(pat["id"].get<std::string>(), pat["template"].get<std::string>());
  if (pattern.template_text() != pat["template"].get<std::string>())
    throw Error(source + ": pattern template does not round-trip");

  Model model;
  model.tokenizer = tokenizer;
  model.pattern = pattern;
  const auto& head = header["head"];
  model.head_kind = parse_head_kind(head["kind"].get<std::string>());
  model.label_words = head["label_words"].get<encoder::LabelWords>();
  model.max_len = head["max_len"].get<std::size_t>();

  encoder::StateDict state;
  state.meta = header["encoder"]["meta"];
  for (const auto& [name, m] : tensors)
    if (name.rfind("head/", 0) != 0) state.tensors.emplace(name, m);
  model.encoder = encoder::restore_encoder(*tokenizer, state, path.parent_path());
  if (model.encoder->spec().identifier != header["encoder"]["identifier"].get<std::string>())
    throw Error(source + ": encoder identifier mismatch");

  if (model.head_kind == HeadKind::TargetAware) {
    verbalizer::HeadOptions opts;
    opts.d_h = head["d_h"].get<std::size_t>();
    opts.d_m = head["d_m"].get<std::size_t>();
    model.head = verbalizer::VerbalizerHead(opts);
    for (Parameter* p : model.head.parameters()) {
      auto it = tensors.find(p->name);
      if (it == tensors.end()) throw Error(source + ": missing tensor " + p->name);
      if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols())
        throw Error(source + ": tensor " + p->name + " has the wrong shape");
      p->value = it->second;
    }
  }

  Checkpoint ckpt;
  ckpt.stage_index = header["stage_index"].get<std::size_t>();
  ckpt.pattern_id = pattern.id();
  ckpt.val_metric = json_optional(header["val_metric"]);
  ckpt.epoch = header["epoch"].get<std::size_t>();
  for (const auto& h : header["history"])
    ckpt.history.push_back({h["epoch"].get<std::size_t>(), h["train_loss"].get<double>(), json_optional(h["val_metric"])});
  ckpt.config = train_config_from_json(header["config"]);
  ckpt.seed = header["seed"].get<std::uint64_t>();
  ckpt.run_id = header["run_id"].get<std::string>();
  ckpt.path = path;
  ckpt.model = std::make_shared<const Model>(std::move(model));
  return ckpt;
}

}  // namespace tapd::trainer
