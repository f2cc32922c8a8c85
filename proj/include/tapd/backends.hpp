// Copyright 2026 The tapd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>

#include "tapd/encoder.hpp"
#include "tapd/tokenizer.hpp"

namespace tapd::encoder {

/// "stub" or "pretrained:<model directory or hub id>".
struct BackendSpec {
  enum class Kind { Stub, Pretrained };
  Kind kind = Kind::Stub;
  std::string identifier;

  static BackendSpec parse(std::string_view text);
  std::string str() const;
};

struct PretrainedOptions {
  /// Python interpreter; TAPD_PYTHON overrides the default "python3".
  std::string python;
  /// Server script; TAPD_HF_SERVER overrides the installed default.
  std::filesystem::path server_script;
  /// "float32" or "float64".
  std::string dtype = "float32";
};

class Sidecar;

/// Pretrained masked LM served by a Python process (tools/hf_encoder_server.py)
/// over pipes. Each instance owns one model handle inside a shared server, so
/// clones are cheap to create and independent to train. The server runs its
/// own Adam on `external_step`; `parameters()` is empty.
class SubprocessEncoder final : public Encoder {
 public:
  SubprocessEncoder(std::shared_ptr<Sidecar> sidecar, int handle, EncoderSpec spec, std::size_t max_positions);
  ~SubprocessEncoder() override;

  const EncoderSpec& spec() const override { return spec_; }
  std::size_t max_positions() const override { return max_positions_; }

  std::vector<EncoderOutput> encode(std::span<const prompts::PromptInstance> batch,
                                    const LabelWords* label_words = nullptr) const override;
  std::vector<EncoderOutput> forward_train(std::span<const prompts::PromptInstance> batch,
                                           const LabelWords* label_words = nullptr) override;
  void backward(std::span<const OutputGrad> grads) override;
  std::vector<Parameter*> parameters() override { return {}; }
  void zero_grad() override;
  void external_step(const AdamSettings& settings, std::size_t step) override;

  Vector token_output_scores(const Vector& h) const override;
  Matrix input_embeddings(std::span<const TokenId> ids) const override;
  double embedding_std() const override;

  std::unique_ptr<Encoder> clone() const override;
  /// Writes the weights to a temporary file named by meta["state_file"].
  StateDict state() const override;
  void load_state(const StateDict& state) override;

 private:
  std::vector<EncoderOutput> run(const char* op, std::span<const prompts::PromptInstance> batch,
                                 const LabelWords* label_words) const;

  std::shared_ptr<Sidecar> sidecar_;
  int handle_;
  EncoderSpec spec_;
  std::size_t max_positions_;
  std::vector<std::size_t> pending_lengths_;
  bool pending_scores_ = false;
};

struct LoadedBackend {
  std::shared_ptr<const Tokenizer> tokenizer;
  std::unique_ptr<Encoder> encoder;
};

/// Starts a server for `identifier` and returns its tokenizer (built from
/// the model's own vocabulary) with the base encoder.
LoadedBackend load_pretrained(const std::string& identifier, const PretrainedOptions& options = {});

/// True when the configured Python can import torch and transformers.
bool pretrained_runtime_available(const PretrainedOptions& options = {});

/// Rebuilds an encoder from checkpointed state. External state files named
/// in `state.meta` are resolved against `archive_dir`.
std::unique_ptr<Encoder> restore_encoder(const Tokenizer& tokenizer, const StateDict& state,
                                         const std::filesystem::path& archive_dir);

}  // namespace tapd::encoder
