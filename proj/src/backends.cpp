// Copyright 2026 The tapd Authors
// SPDX-License-Identifier: Apache-2.0

#include "tapd/backends.hpp"

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <mutex>

#include <nlohmann/json.hpp>

#include "tapd/error.hpp"

#ifndef TAPD_DEFAULT_SERVER
#define TAPD_DEFAULT_SERVER "hf_encoder_server.py"
#endif

namespace tapd::encoder {

BackendSpec BackendSpec::parse(std::string_view text) {
  if (text == "stub") return {Kind::Stub, {}};
  constexpr std::string_view prefix = "pretrained:";
  if (text.substr(0, prefix.size()) == prefix && text.size() > prefix.size())
    return {Kind::Pretrained, std::string(text.substr(prefix.size()))};
  throw Error("unknown backend '" + std::string(text) + "' (expected stub or pretrained:<identifier>)");
}

std::string BackendSpec::str() const { return kind == Kind::Stub ? "stub" : "pretrained:" + identifier; }

namespace {

std::string resolve_python(const PretrainedOptions& o) {
  if (!o.python.empty()) return o.python;
  if (const char* env = std::getenv("TAPD_PYTHON")) return env;
  return "python3";
}

std::filesystem::path resolve_script(const PretrainedOptions& o) {
  if (!o.server_script.empty()) return o.server_script;
  if (const char* env = std::getenv("TAPD_HF_SERVER")) return env;
  return TAPD_DEFAULT_SERVER;
}

}  // namespace

/// One server process and its pipes. Requests are serialised by a mutex.
class Sidecar {
 public:
  Sidecar(const std::string& identifier, const PretrainedOptions& options) : identifier_(identifier) {
    signal(SIGPIPE, SIG_IGN);
    int to_child[2];
    int from_child[2];
    if (pipe(to_child) != 0 || pipe(from_child) != 0) throw Error("pretrained backend: pipe() failed");
    const std::string python = resolve_python(options);
    const std::string script = resolve_script(options).string();
    pid_ = fork();
    if (pid_ < 0) throw Error("pretrained backend: fork() failed");
    if (pid_ == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      execlp(python.c_str(), python.c_str(), script.c_str(), "--model", identifier.c_str(), "--dtype",
             options.dtype.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    out_ = fdopen(to_child[1], "wb");
    in_ = fdopen(from_child[0], "rb");
    if (!out_ || !in_) throw Error("pretrained backend: fdopen() failed");
    hello_ = request({{"op", "hello"}}).first;
  }

  ~Sidecar() {
    if (out_) std::fclose(out_);
    if (in_) std::fclose(in_);
    if (pid_ > 0) {
      int status = 0;
      waitpid(pid_, &status, 0);
    }
  }

  Sidecar(const Sidecar&) = delete;
  Sidecar& operator=(const Sidecar&) = delete;

  std::pair<nlohmann::json, std::vector<double>> request(nlohmann::json req,
                                                         const std::vector<double>& payload = {}) {
    std::lock_guard lock(mutex_);
    req["payload"] = payload.size();
    const std::string line = req.dump() + "\n";
    if (std::fwrite(line.data(), 1, line.size(), out_) != line.size() ||
        (!payload.empty() && std::fwrite(payload.data(), sizeof(double), payload.size(), out_) != payload.size()) ||
        std::fflush(out_) != 0)
      throw Error("pretrained backend (" + identifier_ + "): server is not accepting requests");
    std::string reply_line;
    for (int c; (c = std::fgetc(in_)) != EOF && c != '\n';) reply_line.push_back(static_cast<char>(c));
    if (reply_line.empty())
      throw Error("pretrained backend (" + identifier_ + "): server exited; check that torch and transformers import");
    auto reply = nlohmann::json::parse(reply_line);
    std::vector<double> data(reply.value("payload", std::size_t{0}));
    if (!data.empty() && std::fread(data.data(), sizeof(double), data.size(), in_) != data.size())
      throw Error("pretrained backend (" + identifier_ + "): truncated reply");
    if (!reply.value("ok", false))
      throw Error("pretrained backend (" + identifier_ + "): " + reply.value("error", std::string("unknown error")));
    return {std::move(reply), std::move(data)};
  }

  const nlohmann::json& hello() const { return hello_; }
  const std::string& identifier() const { return identifier_; }
  std::string dtype;

 private:
  std::string identifier_;
  pid_t pid_ = -1;
  FILE* out_ = nullptr;
  FILE* in_ = nullptr;
  std::mutex mutex_;
  nlohmann::json hello_;
};

SubprocessEncoder::SubprocessEncoder(std::shared_ptr<Sidecar> sidecar, int handle, EncoderSpec spec,
                                     std::size_t max_positions)
    : sidecar_(std::move(sidecar)), handle_(handle), spec_(std::move(spec)), max_positions_(max_positions) {}

SubprocessEncoder::~SubprocessEncoder() {
  try {
    if (handle_ != 0) sidecar_->request({{"op", "free"}, {"handle", handle_}});
  } catch (...) {
  }
}

std::vector<EncoderOutput> SubprocessEncoder::run(const char* op, std::span<const prompts::PromptInstance> batch,
                                                  const LabelWords* label_words) const {
  if (batch.empty()) return {};
  nlohmann::json ids = nlohmann::json::array();
  nlohmann::json masks = nlohmann::json::array();
  for (const auto& inst : batch) {
    check_positions(inst);
    ids.push_back(inst.token_ids);
    masks.push_back(inst.mask_index);
  }
  nlohmann::json req = {{"op", op}, {"handle", handle_}, {"ids", ids}, {"mask_index", masks}};
  if (label_words) req["label_words"] = *label_words;
  const auto [reply, data] = sidecar_->request(req);
  const auto d = static_cast<Eigen::Index>(spec_.d_h);
  std::vector<EncoderOutput> out(batch.size());
  std::size_t offset = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto rows = static_cast<Eigen::Index>(batch[i].token_ids.size());
    out[i].hidden = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        data.data() + offset, rows, d);
    offset += static_cast<std::size_t>(rows * d);
  }
  if (label_words)
    for (std::size_t i = 0; i < batch.size(); ++i, offset += 3)
      out[i].label_scores = std::array<double, 3>{data[offset], data[offset + 1], data[offset + 2]};
  if (offset != data.size()) throw Error("pretrained backend: reply size mismatch");
  return out;
}

std::vector<EncoderOutput> SubprocessEncoder::encode(std::span<const prompts::PromptInstance> batch,
                                                     const LabelWords* label_words) const {
  return run("encode", batch, label_words);
}

std::vector<EncoderOutput> SubprocessEncoder::forward_train(std::span<const prompts::PromptInstance> batch,
                                                            const LabelWords* label_words) {
  auto out = run("forward_train", batch, label_words);
  pending_lengths_.clear();
  for (const auto& inst : batch) pending_lengths_.push_back(inst.token_ids.size());
  pending_scores_ = label_words != nullptr;
  return out;
}

void SubprocessEncoder::backward(std::span<const OutputGrad> grads) {
  if (grads.size() != pending_lengths_.size()) throw Error("pretrained backward: gradient count mismatch");
  std::vector<double> payload;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> g = grads[i].hidden;
    if (static_cast<std::size_t>(g.rows()) != pending_lengths_[i]) throw Error("pretrained backward: shape mismatch");
    payload.insert(payload.end(), g.data(), g.data() + g.size());
  }
  if (pending_scores_)
    for (const auto& g : grads) payload.insert(payload.end(), g.label_scores.begin(), g.label_scores.end());
  sidecar_->request({{"op", "backward"}, {"handle", handle_}}, payload);
  pending_lengths_.clear();
}

void SubprocessEncoder::zero_grad() { sidecar_->request({{"op", "zero_grad"}, {"handle", handle_}}); }

void SubprocessEncoder::external_step(const AdamSettings& s, std::size_t) {
  sidecar_->request({{"op", "step"},
                     {"handle", handle_},
                     {"lr", s.learning_rate},
                     {"beta1", s.beta1},
                     {"beta2", s.beta2},
                     {"eps", s.epsilon}});
}

Vector SubprocessEncoder::token_output_scores(const Vector& h) const {
  if (h.size() != static_cast<Eigen::Index>(spec_.d_h)) throw Error("token_output_scores: width mismatch");
  const auto [reply, data] =
      sidecar_->request({{"op", "output_scores"}, {"handle", handle_}}, std::vector<double>(h.data(), h.data() + h.size()));
  return Eigen::Map<const Vector>(data.data(), static_cast<Eigen::Index>(data.size()));
}

Matrix SubprocessEncoder::input_embeddings(std::span<const TokenId> ids) const {
  const auto [reply, data] = sidecar_->request(
      {{"op", "input_embeddings"}, {"handle", handle_}, {"ids", std::vector<TokenId>(ids.begin(), ids.end())}});
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      data.data(), static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(spec_.d_h));
}

double SubprocessEncoder::embedding_std() const {
  return sidecar_->request({{"op", "embedding_std"}, {"handle", handle_}}).first["value"].get<double>();
}

std::unique_ptr<Encoder> SubprocessEncoder::clone() const {
  const int handle = sidecar_->request({{"op", "clone"}, {"handle", handle_}}).first["handle"].get<int>();
  return std::make_unique<SubprocessEncoder>(sidecar_, handle, spec_, max_positions_);
}

StateDict SubprocessEncoder::state() const {
  static std::atomic<std::uint64_t> counter{0};
  const auto path = std::filesystem::temp_directory_path() /
                    ("tapd-state-" + std::to_string(getpid()) + "-" + std::to_string(counter++) + ".pt");
  sidecar_->request({{"op", "save"}, {"handle", handle_}, {"path", path.string()}});
  StateDict dict;
  dict.meta = {{"backend", "pretrained"},
               {"identifier", sidecar_->identifier()},
               {"dtype", sidecar_->dtype},
               {"state_file", path.string()}};
  return dict;
}

void SubprocessEncoder::load_state(const StateDict& state) {
  if (!state.meta.contains("state_file")) throw Error("pretrained state lacks a state_file");
  sidecar_->request({{"op", "load"}, {"handle", handle_}, {"path", state.meta["state_file"].get<std::string>()}});
}

LoadedBackend load_pretrained(const std::string& identifier, const PretrainedOptions& options) {
  auto sidecar = std::make_shared<Sidecar>(identifier, options);
  sidecar->dtype = options.dtype;
  const auto& hello = sidecar->hello();
  auto tokenizer = std::make_shared<const Tokenizer>(Tokenizer::from_vocab_file(hello["vocab_file"].get<std::string>()));
  EncoderSpec spec;
  spec.d_h = hello["d_h"].get<std::size_t>();
  spec.vocab_size = hello["vocab_size"].get<std::size_t>();
  spec.mask_token_id = tokenizer->mask_id();
  spec.sep_token_id = tokenizer->sep_id();
  spec.start_token_id = tokenizer->cls_id();
  spec.identifier = "pretrained:" + identifier;
  spec.validate();
  const auto max_positions = hello["max_positions"].get<std::size_t>();
  LoadedBackend out;
  out.tokenizer = tokenizer;
  out.encoder = std::make_unique<SubprocessEncoder>(sidecar, 0, spec, max_positions);
  return out;
}

bool pretrained_runtime_available(const PretrainedOptions& options) {
  const std::string cmd = resolve_python(options) + " -c \"import torch, transformers\" >/dev/null 2>&1";
  return std::system(cmd.c_str()) == 0 && std::filesystem::exists(resolve_script(options));
}

std::unique_ptr<Encoder> restore_encoder(const Tokenizer& tokenizer, const StateDict& state,
                                         const std::filesystem::path& archive_dir) {
  const std::string backend = state.meta.value("backend", std::string());
  if (backend == "stub") {
    StubOptions opts;
    opts.d_h = state.meta["d_h"].get<std::size_t>();
    opts.max_positions = state.meta["max_positions"].get<std::size_t>();
    opts.seed = state.meta["seed"].get<std::uint64_t>();
    if (state.meta["vocab_size"].get<std::size_t>() != tokenizer.size())
      throw Error("stub state vocabulary size does not match the tokenizer");
    auto enc = std::make_unique<StubEncoder>(tokenizer, opts);
    enc->load_state(state);
    return enc;
  }
  if (backend == "pretrained") {
    PretrainedOptions opts;
    opts.dtype = state.meta.value("dtype", std::string("float32"));
    auto loaded = load_pretrained(state.meta["identifier"].get<std::string>(), opts);
    if (loaded.tokenizer->vocabulary() != tokenizer.vocabulary())
      throw Error("pretrained model vocabulary differs from the checkpoint's");
    StateDict resolved = state;
    resolved.meta["state_file"] = (archive_dir / state.meta["state_file"].get<std::string>()).string();
    loaded.encoder->load_state(resolved);
    return std::move(loaded.encoder);
  }
  throw Error("unknown encoder backend '" + backend + "' in checkpoint");
}

}  // namespace tapd::encoder
