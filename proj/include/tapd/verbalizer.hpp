// Copyright 2026 The tapd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "tapd/encoder.hpp"
#include "tapd/label.hpp"
#include "tapd/prompts.hpp"
#include "tapd/random.hpp"

namespace tapd::verbalizer {

using encoder::Matrix;
using encoder::Parameter;
using encoder::Vector;

/// Softmax output over the three labels, in StanceLabel order.
struct StanceDistribution {
  std::array<double, 3> probs{1.0 / 3, 1.0 / 3, 1.0 / 3};
  double temperature = 1.0;

  double operator[](StanceLabel label) const { return probs[index_of(label)]; }
  /// Highest-probability label; ties go to the earlier label in
  /// (Favor, None, Against) order.
  StanceLabel argmax() const;
};

/// Numerically stable softmax of `logits / temperature`. Throws NumericError
/// on non-finite logits and Error on a non-positive temperature.
StanceDistribution softmax(const std::array<double, 3>& logits, double temperature);

/// Average of the hidden rows in `span` (the pooled target representation).
Vector pool_target(const Matrix& hidden, prompts::TokenSpan span);

/// Target-aware stance vectors: h_target concatenated with each stance
/// vector. `stance_vectors` holds one row per label.
std::array<Vector, 3> compose_target_aware(const Vector& h_target, const Matrix& stance_vectors);

struct HeadOptions {
  std::size_t d_h = 16;
  std::size_t d_m = 384;
  /// Standard deviation for the stance vectors; match it to the encoder's
  /// token embeddings.
  double stance_std = 0.25;
  std::uint64_t seed = 0;
};

/// Trainable stance vectors plus the two projections into the d_m scoring
/// space: one for the mask state (d_h -> d_m) and one shared by the three
/// target-aware stance vectors (2 d_h -> d_m). Both carry offsets.
class VerbalizerHead {
 public:
  VerbalizerHead() = default;
  explicit VerbalizerHead(const HeadOptions& options);

  std::size_t d_h() const { return static_cast<std::size_t>(stance_vectors_.value.cols()); }
  std::size_t d_m() const { return static_cast<std::size_t>(mask_weight_.value.rows()); }

  /// Replaces the stance vectors (3 x d_h, StanceLabel row order).
  void set_stance_vectors(const Matrix& vectors);
  const Matrix& stance_vectors() const { return stance_vectors_.value; }

  Vector project_mask(const Vector& h_mask) const;
  Vector project_vt(const Vector& vt) const;

  /// Raw (temperature-free) scores ĥ_mask · V̂T_i.
  std::array<double, 3> logits(const Vector& h_mask, const std::array<Vector, 3>& vts) const;

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

  Parameter& stance_vectors_param() { return stance_vectors_; }
  Parameter& mask_weight() { return mask_weight_; }
  Parameter& mask_bias() { return mask_bias_; }
  Parameter& vt_weight() { return vt_weight_; }
  Parameter& vt_bias() { return vt_bias_; }
  const Parameter& mask_weight() const { return mask_weight_; }
  const Parameter& mask_bias() const { return mask_bias_; }
  const Parameter& vt_weight() const { return vt_weight_; }
  const Parameter& vt_bias() const { return vt_bias_; }

 private:
  Parameter stance_vectors_;  // 3 x d_h
  Parameter mask_weight_;     // d_m x d_h
  Parameter mask_bias_;       // d_m x 1
  Parameter vt_weight_;       // d_m x 2 d_h
  Parameter vt_bias_;         // d_m x 1
};

/// Scores `h_mask` against the target-aware stance vectors at `temperature`;
/// temperature 1 gives the plain classification distribution.
StanceDistribution score(const Vector& h_mask, const std::array<Vector, 3>& vts, const VerbalizerHead& head,
                         double temperature);

/// Everything the head needs to run backward for one example.
struct HeadTape {
  Vector h_mask;    // after dropout
  Vector h_target;  // after dropout
  Vector mask_keep;
  Vector target_keep;
  Vector projected_mask;
  std::array<Vector, 3> vts;
  std::array<Vector, 3> projected_vts;
  std::array<double, 3> logits{};
  prompts::TokenSpan target_span;
  std::size_t mask_index = 0;
  std::size_t rows = 0;
};

/// Forward pass over one encoder output. With `dropout_rng` set, inverted
/// dropout at `dropout_rate` is applied to the mask state and the pooled
/// target representation.
HeadTape head_forward(const encoder::EncoderOutput& output, const prompts::PromptInstance& instance,
                      const VerbalizerHead& head, double dropout_rate, Rng* dropout_rng);

/// Accumulates head parameter gradients for dL/dlogits and returns the
/// gradient with respect to the encoder's hidden states.
Matrix head_backward(const HeadTape& tape, const std::array<double, 3>& dlogits, VerbalizerHead& head);

/// Full inference pipeline for one instance: encode, pool the target,
/// compose, score at temperature 1, take the argmax.
std::pair<StanceLabel, StanceDistribution> classify(const prompts::PromptInstance& instance,
                                                    const encoder::Encoder& encoder, const VerbalizerHead& head);

/// Baseline verbalizer: softmax over the masked-LM scores of one fixed word
/// per label.
StanceDistribution fixed_verbalizer_score(const Vector& h_mask, const encoder::LabelWords& label_words,
                                          const encoder::Encoder& encoder);

}  // namespace tapd::verbalizer
