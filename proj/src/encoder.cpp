// Copyright 2026 The tapd Authors
// SPDX-License-Identifier: Apache-2.0

#include "tapd/encoder.hpp"

#include <cmath>
#include <set>

#include "tapd/error.hpp"
#include "tapd/random.hpp"

namespace tapd::encoder {

void EncoderSpec::validate() const {
  if (d_h == 0) throw Error("encoder d_h must be positive");
  if (vocab_size == 0) throw Error("encoder vocab_size must be positive");
  const std::set<TokenId> ids = {mask_token_id, sep_token_id, start_token_id};
  if (ids.size() != 3) throw Error("encoder special token ids must be distinct");
  for (TokenId id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_size) throw Error("encoder special token id out of range");
}

void Encoder::zero_grad() {
  for (Parameter* p : parameters()) p->grad.setZero();
}

std::size_t Encoder::parameter_count() {
  std::size_t n = 0;
  for (Parameter* p : parameters()) n += static_cast<std::size_t>(p->value.size());
  return n;
}

void Encoder::check_positions(const prompts::PromptInstance& instance) const {
  if (instance.token_ids.size() > max_positions())
    throw Error("sequence of " + std::to_string(instance.token_ids.size()) + " tokens exceeds positional capacity " +
                std::to_string(max_positions()) + " (example '" + instance.example_id + "')");
  for (TokenId id : instance.token_ids)
    if (id < 0 || static_cast<std::size_t>(id) >= spec().vocab_size)
      throw Error("token id " + std::to_string(id) + " outside vocabulary (example '" + instance.example_id + "')");
}

namespace {

Matrix gaussian(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = dist(rng);
  return m;
}

void softmax_rows(Matrix& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double top = m.row(r).maxCoeff();
    m.row(r) = (m.row(r).array() - top).exp();
    m.row(r) /= m.row(r).sum();
  }
}

}  // namespace

StubEncoder::StubEncoder(const Tokenizer& tokenizer, const StubOptions& options) : options_(options) {
  spec_.d_h = options.d_h;
  spec_.vocab_size = tokenizer.size();
  spec_.mask_token_id = tokenizer.mask_id();
  spec_.sep_token_id = tokenizer.sep_id();
  spec_.start_token_id = tokenizer.cls_id();
  spec_.identifier = "stub";
  spec_.validate();
  if (options.max_positions == 0) throw Error("stub max_positions must be positive");

  const std::size_t d = options.d_h;
  const double emb_std = options.init_std > 0 ? options.init_std : 1.0 / std::sqrt(static_cast<double>(d));
  const double w_std = 1.0 / std::sqrt(static_cast<double>(d));
  Rng rng = substream(options.seed, "stub/init");
  embedding_ = Parameter("encoder/embedding", gaussian(spec_.vocab_size, d, emb_std, rng));
  positions_ = Parameter("encoder/positions", gaussian(options.max_positions, d, emb_std, rng));
  query_ = Parameter("encoder/query", gaussian(d, d, w_std, rng));
  key_ = Parameter("encoder/key", gaussian(d, d, w_std, rng));
  value_ = Parameter("encoder/value", gaussian(d, d, w_std, rng));
  out_ = Parameter("encoder/out", gaussian(d, d, w_std, rng));
  out_bias_ = Parameter("encoder/out_bias", Matrix::Zero(1, static_cast<Eigen::Index>(d)));
  output_bias_ = Parameter("encoder/output_bias", Matrix::Zero(1, static_cast<Eigen::Index>(spec_.vocab_size)));
}

EncoderOutput StubEncoder::run(const prompts::PromptInstance& instance, const LabelWords* label_words,
                               Tape* tape) const {
  check_positions(instance);
  const auto len = static_cast<Eigen::Index>(instance.token_ids.size());
  const auto d = static_cast<Eigen::Index>(spec_.d_h);
  Matrix x(len, d);
  for (Eigen::Index i = 0; i < len; ++i)
    x.row(i) = embedding_.value.row(instance.token_ids[static_cast<std::size_t>(i)]) + positions_.value.row(i);
  Matrix q = x * query_.value;
  Matrix k = x * key_.value;
  Matrix v = x * value_.value;
  Matrix a = (q * k.transpose()) / std::sqrt(static_cast<double>(d));
  softmax_rows(a);
  Matrix c = a * v;
  Matrix u = c * out_.value;
  u.rowwise() += out_bias_.value.row(0);
  EncoderOutput out;
  out.hidden = x + u.array().tanh().matrix();
  if (label_words) {
    const Vector h_mask = out.hidden.row(static_cast<Eigen::Index>(instance.mask_index)).transpose();
    std::array<double, 3> scores{};
    for (std::size_t j = 0; j < 3; ++j) {
      const TokenId w = (*label_words)[j];
      scores[j] = embedding_.value.row(w).dot(h_mask) + output_bias_.value(0, w);
    }
    out.label_scores = scores;
  }
  if (tape) {
    tape->ids = instance.token_ids;
    tape->mask_index = instance.mask_index;
    tape->label_words = label_words ? std::optional<LabelWords>(*label_words) : std::nullopt;
    tape->x = std::move(x);
    tape->q = std::move(q);
    tape->k = std::move(k);
    tape->v = std::move(v);
    tape->a = std::move(a);
    tape->c = std::move(c);
    tape->u = std::move(u);
    tape->h = out.hidden;
  }
  return out;
}

std::vector<EncoderOutput> StubEncoder::encode(std::span<const prompts::PromptInstance> batch,
                                               const LabelWords* label_words) const {
  std::vector<EncoderOutput> outputs;
  outputs.reserve(batch.size());
  for (const auto& instance : batch) outputs.push_back(run(instance, label_words, nullptr));
  return outputs;
}

std::vector<EncoderOutput> StubEncoder::forward_train(std::span<const prompts::PromptInstance> batch,
                                                      const LabelWords* label_words) {
  tapes_.assign(batch.size(), Tape{});
  std::vector<EncoderOutput> outputs;
  outputs.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) outputs.push_back(run(batch[i], label_words, &tapes_[i]));
  return outputs;
}

void StubEncoder::backward(std::span<const OutputGrad> grads) {
  if (grads.size() != tapes_.size()) throw Error("stub backward: gradient count does not match the last batch");
  for (std::size_t i = 0; i < grads.size(); ++i) backward_one(tapes_[i], grads[i]);
  tapes_.clear();
}

void StubEncoder::backward_one(const Tape& t, const OutputGrad& grad) {
  const auto d = static_cast<Eigen::Index>(spec_.d_h);
  const auto mask_row = static_cast<Eigen::Index>(t.mask_index);
  Matrix dh = grad.hidden;
  if (t.label_words) {
    for (std::size_t j = 0; j < 3; ++j) {
      const double ds = grad.label_scores[j];
      if (ds == 0.0) continue;
      const TokenId w = (*t.label_words)[j];
      dh.row(mask_row) += ds * embedding_.value.row(w);
      embedding_.grad.row(w) += ds * t.h.row(mask_row);
      output_bias_.grad(0, w) += ds;
    }
  }

  Matrix dx = dh;
  const Matrix tanh_u = t.u.array().tanh().matrix();
  const Matrix du = (dh.array() * (1.0 - tanh_u.array().square())).matrix();
  out_.grad += t.c.transpose() * du;
  out_bias_.grad.row(0) += du.colwise().sum();
  const Matrix dc = du * out_.value.transpose();
  const Matrix da = dc * t.v.transpose();
  const Matrix dv = t.a.transpose() * dc;
  Matrix ds = t.a.array() * (da.array().colwise() - (da.array() * t.a.array()).rowwise().sum());
  ds /= std::sqrt(static_cast<double>(d));
  const Matrix dq = ds * t.k;
  const Matrix dk = ds.transpose() * t.q;
  query_.grad += t.x.transpose() * dq;
  key_.grad += t.x.transpose() * dk;
  value_.grad += t.x.transpose() * dv;
  dx += dq * query_.value.transpose() + dk * key_.value.transpose() + dv * value_.value.transpose();
  for (Eigen::Index i = 0; i < dx.rows(); ++i) {
    embedding_.grad.row(t.ids[static_cast<std::size_t>(i)]) += dx.row(i);
    positions_.grad.row(i) += dx.row(i);
  }
}

std::vector<Parameter*> StubEncoder::parameters() {
  return {&embedding_, &positions_, &query_, &key_, &value_, &out_, &out_bias_, &output_bias_};
}

Vector StubEncoder::token_output_scores(const Vector& h) const {
  if (h.size() != static_cast<Eigen::Index>(spec_.d_h)) throw Error("token_output_scores: width mismatch");
  if (!h.allFinite()) throw NumericError("token_output_scores: non-finite hidden state");
  return embedding_.value * h + output_bias_.value.row(0).transpose();
}

Matrix StubEncoder::input_embeddings(std::span<const TokenId> ids) const {
  Matrix out(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(spec_.d_h));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= spec_.vocab_size) throw Error("token id out of range");
    out.row(static_cast<Eigen::Index>(i)) = embedding_.value.row(ids[i]);
  }
  return out;
}

double StubEncoder::embedding_std() const {
  const auto& e = embedding_.value;
  const double mean = e.mean();
  return std::sqrt((e.array() - mean).square().sum() / static_cast<double>(e.size()));
}

std::unique_ptr<Encoder> StubEncoder::clone() const {
  auto copy = std::make_unique<StubEncoder>(*this);
  copy->tapes_.clear();
  return copy;
}

StateDict StubEncoder::state() const {
  StateDict dict;
  for (const Parameter* p : {&embedding_, &positions_, &query_, &key_, &value_, &out_, &out_bias_, &output_bias_})
    dict.tensors.emplace(p->name, p->value);
  dict.meta = {{"backend", "stub"},
               {"d_h", spec_.d_h},
               {"vocab_size", spec_.vocab_size},
               {"max_positions", options_.max_positions},
               {"seed", options_.seed}};
  return dict;
}

void StubEncoder::load_state(const StateDict& dict) {
  for (Parameter* p : parameters()) {
    auto it = dict.tensors.find(p->name);
    if (it == dict.tensors.end()) throw Error("stub state lacks tensor " + p->name);
    if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols())
      throw Error("stub state tensor " + p->name + " has the wrong shape");
    p->value = it->second;
    p->grad.setZero();
  }
}

}  // namespace tapd::encoder
