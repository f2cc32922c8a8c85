// Copyright 2026 The tapd Authors
// SPDX-License-Identifier: Apache-2.0

#include "tapd/verbalizer.hpp"

#include <cmath>

#include "tapd/error.hpp"

namespace tapd::verbalizer {

namespace {

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = dist(rng);
  return m;
}

Vector dropout_mask(Eigen::Index n, double rate, Rng& rng) {
  Vector keep = Vector::Ones(n);
  if (rate <= 0.0) return keep;
  std::bernoulli_distribution drop(rate);
  const double scale = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < n; ++i) keep(i) = drop(rng) ? 0.0 : scale;
  return keep;
}

}  // namespace

StanceLabel StanceDistribution::argmax() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i)
    if (probs[i] > probs[best]) best = i;
  return label_at(best);
}

StanceDistribution softmax(const std::array<double, 3>& logits, double temperature) {
  if (!(temperature > 0.0)) throw Error("temperature must be positive");
  for (double z : logits)
    if (!std::isfinite(z)) throw NumericError("non-finite stance logit");
  std::array<double, 3> scaled{};
  double top = -INFINITY;
  for (std::size_t i = 0; i < 3; ++i) {
    scaled[i] = logits[i] / temperature;
    top = std::max(top, scaled[i]);
  }
  double total = 0.0;
  for (double& z : scaled) {
    z = std::exp(z - top);
    total += z;
  }
  StanceDistribution dist;
  dist.temperature = temperature;
  for (std::size_t i = 0; i < 3; ++i) dist.probs[i] = scaled[i] / total;
  return dist;
}

Vector pool_target(const Matrix& hidden, prompts::TokenSpan span) {
  if (span.empty()) throw Error("pool_target: empty target span");
  if (span.end > static_cast<std::size_t>(hidden.rows())) throw Error("pool_target: span exceeds sequence");
  return hidden.middleRows(static_cast<Eigen::Index>(span.begin), static_cast<Eigen::Index>(span.size()))
             .colwise()
             .mean()
             .transpose();
}

std::array<Vector, 3> compose_target_aware(const Vector& h_target, const Matrix& stance_vectors) {
  if (stance_vectors.rows() != 3 || stance_vectors.cols() != h_target.size())
    throw Error("compose_target_aware: width mismatch between target representation and stance vectors");
  std::array<Vector, 3> vts;
  const Eigen::Index d = h_target.size();
  for (std::size_t i = 0; i < 3; ++i) {
    vts[i].resize(2 * d);
    vts[i] << h_target, stance_vectors.row(static_cast<Eigen::Index>(i)).transpose();
  }
  return vts;
}

VerbalizerHead::VerbalizerHead(const HeadOptions& options) {
  if (options.d_h == 0 || options.d_m == 0) throw Error("verbalizer dimensions must be positive");
  const auto d = static_cast<Eigen::Index>(options.d_h);
  const auto m = static_cast<Eigen::Index>(options.d_m);
  Rng rng = substream(options.seed, "head/init");
  stance_vectors_ = Parameter("head/stance_vectors", gaussian(3, d, options.stance_std, rng));
  mask_weight_ = Parameter("head/mask_weight", gaussian(m, d, 1.0 / std::sqrt(static_cast<double>(d)), rng));
  mask_bias_ = Parameter("head/mask_bias", Matrix::Zero(m, 1));
  vt_weight_ = Parameter("head/vt_weight", gaussian(m, 2 * d, 1.0 / std::sqrt(static_cast<double>(2 * d)), rng));
  vt_bias_ = Parameter("head/vt_bias", Matrix::Zero(m, 1));
}

void VerbalizerHead::set_stance_vectors(const Matrix& vectors) {
  if (vectors.rows() != 3 || vectors.cols() != stance_vectors_.value.cols())
    throw Error("stance vectors must be 3 x d_h");
  stance_vectors_.value = vectors;
}

Vector VerbalizerHead::project_mask(const Vector& h_mask) const {
  return mask_weight_.value * h_mask + mask_bias_.value.col(0);
}

Vector VerbalizerHead::project_vt(const Vector& vt) const { return vt_weight_.value * vt + vt_bias_.value.col(0); }

std::array<double, 3> VerbalizerHead::logits(const Vector& h_mask, const std::array<Vector, 3>& vts) const {
  const Vector a = project_mask(h_mask);
  std::array<double, 3> out{};
  for (std::size_t i = 0; i < 3; ++i) out[i] = a.dot(project_vt(vts[i]));
  return out;
}

std::vector<Parameter*> VerbalizerHead::parameters() {
  return {&stance_vectors_, &mask_weight_, &mask_bias_, &vt_weight_, &vt_bias_};
}

std::vector<const Parameter*> VerbalizerHead::parameters() const {
  return {&stance_vectors_, &mask_weight_, &mask_bias_, &vt_weight_, &vt_bias_};
}

StanceDistribution score(const Vector& h_mask, const std::array<Vector, 3>& vts, const VerbalizerHead& head,
                         double temperature) {
  return softmax(head.logits(h_mask, vts), temperature);
}

HeadTape head_forward(const encoder::EncoderOutput& output, const prompts::PromptInstance& instance,
                      const VerbalizerHead& head, double dropout_rate, Rng* dropout_rng) {
  HeadTape t;
  t.rows = static_cast<std::size_t>(output.hidden.rows());
  t.mask_index = instance.mask_index;
  t.target_span = instance.target_span;
  const Eigen::Index d = output.hidden.cols();
  Vector h_mask = output.hidden.row(static_cast<Eigen::Index>(instance.mask_index)).transpose();
  Vector h_target = pool_target(output.hidden, instance.target_span);
  if (dropout_rng) {
    t.mask_keep = dropout_mask(d, dropout_rate, *dropout_rng);
    t.target_keep = dropout_mask(d, dropout_rate, *dropout_rng);
  } else {
    t.mask_keep = Vector::Ones(d);
    t.target_keep = Vector::Ones(d);
  }
  t.h_mask = h_mask.cwiseProduct(t.mask_keep);
  t.h_target = h_target.cwiseProduct(t.target_keep);
  t.vts = compose_target_aware(t.h_target, head.stance_vectors());
  t.projected_mask = head.project_mask(t.h_mask);
  for (std::size_t i = 0; i < 3; ++i) {
    t.projected_vts[i] = head.project_vt(t.vts[i]);
    t.logits[i] = t.projected_mask.dot(t.projected_vts[i]);
  }
  return t;
}

Matrix head_backward(const HeadTape& t, const std::array<double, 3>& dlogits, VerbalizerHead& head) {
  const Eigen::Index d = t.h_mask.size();
  Vector d_projected_mask = Vector::Zero(t.projected_mask.size());
  Vector d_h_target = Vector::Zero(d);
  for (std::size_t i = 0; i < 3; ++i) {
    const double g = dlogits[i];
    d_projected_mask += g * t.projected_vts[i];
    const Vector d_projected_vt = g * t.projected_mask;
    head.vt_weight().grad += d_projected_vt * t.vts[i].transpose();
    head.vt_bias().grad.col(0) += d_projected_vt;
    const Vector d_vt = head.vt_weight().value.transpose() * d_projected_vt;
    d_h_target += d_vt.head(d);
    head.stance_vectors_param().grad.row(static_cast<Eigen::Index>(i)) += d_vt.tail(d).transpose();
  }
  head.mask_weight().grad += d_projected_mask * t.h_mask.transpose();
  head.mask_bias().grad.col(0) += d_projected_mask;
  const Vector d_h_mask = (head.mask_weight().value.transpose() * d_projected_mask).cwiseProduct(t.mask_keep);
  d_h_target = d_h_target.cwiseProduct(t.target_keep);

  Matrix d_hidden = Matrix::Zero(static_cast<Eigen::Index>(t.rows), d);
  d_hidden.row(static_cast<Eigen::Index>(t.mask_index)) += d_h_mask.transpose();
  const double share = 1.0 / static_cast<double>(t.target_span.size());
  for (std::size_t r = t.target_span.begin; r < t.target_span.end; ++r)
    d_hidden.row(static_cast<Eigen::Index>(r)) += share * d_h_target.transpose();
  return d_hidden;
}

std::pair<StanceLabel, StanceDistribution> classify(const prompts::PromptInstance& instance,
                                                    const encoder::Encoder& encoder, const VerbalizerHead& head) {
  const auto outputs = encoder.encode(std::span<const prompts::PromptInstance>(&instance, 1));
  const auto tape = head_forward(outputs.front(), instance, head, 0.0, nullptr);
  const auto dist = softmax(tape.logits, 1.0);
  return {dist.argmax(), dist};
}

StanceDistribution fixed_verbalizer_score(const Vector& h_mask, const encoder::LabelWords& label_words,
                                          const encoder::Encoder& encoder) {
  const Vector scores = encoder.token_output_scores(h_mask);
  std::array<double, 3> picked{};
  for (std::size_t i = 0; i < 3; ++i) {
    const TokenId w = label_words[i];
    if (w < 0 || w >= scores.size()) throw Error("fixed verbalizer word id out of range");
    picked[i] = scores(w);
  }
  return softmax(picked, 1.0);
}

}  // namespace tapd::verbalizer
