// Copyright 2026 The tapd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tapd/prompts.hpp"
#include "tapd/tokenizer.hpp"

namespace tapd::encoder {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// One vocabulary id per stance label, in StanceLabel order.
using LabelWords = std::array<TokenId, 3>;

struct EncoderSpec {
  std::size_t d_h = 0;
  std::size_t vocab_size = 0;
  TokenId mask_token_id = -1;
  TokenId sep_token_id = -1;
  TokenId start_token_id = -1;
  std::string identifier;

  /// Throws Error unless d_h > 0 and the special ids are distinct and in range.
  void validate() const;
};

struct EncoderOutput {
  /// (tokens x d_h) final-layer hidden states of the unpadded sequence.
  Matrix hidden;
  /// Masked-LM scores of the requested label words at the mask position.
  std::optional<std::array<double, 3>> label_scores;
};

/// Gradient of the loss with respect to one EncoderOutput.
struct OutputGrad {
  Matrix hidden;
  std::array<double, 3> label_scores{0.0, 0.0, 0.0};
};

/// A trainable tensor with its gradient accumulator.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}
};

struct AdamSettings {
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Serialisable parameter state: named tensors plus backend metadata.
struct StateDict {
  std::map<std::string, Matrix> tensors;
  nlohmann::json meta = nlohmann::json::object();
};

/// Masked-LM encoder seen by the verbalizer and the trainer.
///
/// Inference (`encode`, `token_output_scores`, `input_embeddings`) is const
/// and reentrant. Training follows a single-writer protocol: `forward_train`
/// records what `backward` needs for exactly that batch, `backward`
/// accumulates parameter gradients, and the optimiser consumes them through
/// `parameters()` (or `external_step` for backends that own their weights).
class Encoder {
 public:
  virtual ~Encoder() = default;

  virtual const EncoderSpec& spec() const = 0;
  virtual std::size_t max_positions() const = 0;

  virtual std::vector<EncoderOutput> encode(std::span<const prompts::PromptInstance> batch,
                                            const LabelWords* label_words = nullptr) const = 0;

  virtual std::vector<EncoderOutput> forward_train(std::span<const prompts::PromptInstance> batch,
                                                   const LabelWords* label_words = nullptr) = 0;
  virtual void backward(std::span<const OutputGrad> grads) = 0;

  /// Parameters updated by the in-process optimiser. May be empty.
  virtual std::vector<Parameter*> parameters() = 0;
  virtual void zero_grad();
  /// Applies one optimiser step to weights the encoder manages itself.
  virtual void external_step(const AdamSettings&, std::size_t /*step*/) {}

  /// Vocabulary-sized masked-LM scores for a hidden state. Throws
  /// UnsupportedError when the backend has no output embedding.
  virtual Vector token_output_scores(const Vector& h) const = 0;

  /// Input embedding rows for `ids` as a (ids x d_h) matrix.
  virtual Matrix input_embeddings(std::span<const TokenId> ids) const = 0;

  /// Standard deviation of the input token embedding entries.
  virtual double embedding_std() const = 0;

  virtual std::unique_ptr<Encoder> clone() const = 0;

  virtual StateDict state() const = 0;
  virtual void load_state(const StateDict& state) = 0;

  std::size_t parameter_count();

 protected:
  void check_positions(const prompts::PromptInstance& instance) const;
};

/// Hyper-parameters of the stub backend.
struct StubOptions {
  std::size_t d_h = 16;
  std::size_t max_positions = 256;
  std::uint64_t seed = 0;
  /// Standard deviation of the initial token and position embeddings;
  /// 0 selects 1/sqrt(d_h).
  double init_std = 0.0;
};

/// Tiny deterministic trainable masked-LM stand-in: token + position
/// embeddings followed by one single-head attention mixing layer,
///   H = X + tanh(softmax(Q K^T / sqrt(d)) V Wo + bo),
/// with an output head tied to the token embedding plus a bias.
class StubEncoder final : public Encoder {
 public:
  StubEncoder(const Tokenizer& tokenizer, const StubOptions& options);

  const EncoderSpec& spec() const override { return spec_; }
  std::size_t max_positions() const override { return options_.max_positions; }

  std::vector<EncoderOutput> encode(std::span<const prompts::PromptInstance> batch,
                                    const LabelWords* label_words = nullptr) const override;
  std::vector<EncoderOutput> forward_train(std::span<const prompts::PromptInstance> batch,
                                           const LabelWords* label_words = nullptr) override;
  void backward(std::span<const OutputGrad> grads) override;

  std::vector<Parameter*> parameters() override;

  Vector token_output_scores(const Vector& h) const override;
  Matrix input_embeddings(std::span<const TokenId> ids) const override;
  double embedding_std() const override;

  std::unique_ptr<Encoder> clone() const override;
  StateDict state() const override;
  void load_state(const StateDict& state) override;

  const StubOptions& options() const { return options_; }

  /// Output bias of the tied masked-LM head (vocab_size entries).
  Parameter& output_bias() { return output_bias_; }

 private:
  struct Tape {
    std::vector<TokenId> ids;
    Matrix x, q, k, v, a, c, u, h;
    std::size_t mask_index = 0;
    std::optional<LabelWords> label_words;
  };

  EncoderOutput run(const prompts::PromptInstance& instance, const LabelWords* label_words, Tape* tape) const;
  void backward_one(const Tape& tape, const OutputGrad& grad);

  EncoderSpec spec_;
  StubOptions options_;
  Parameter embedding_;    // vocab x d
  Parameter positions_;    // max_positions x d
  Parameter query_, key_, value_, out_;  // d x d
  Parameter out_bias_;     // 1 x d
  Parameter output_bias_;  // 1 x vocab
  std::vector<Tape> tapes_;
};

}  // namespace tapd::encoder
