// Copyright 2026 The tapd Authors
// SPDX-License-Identifier: Apache-2.0

#include "tapd/introspect.hpp"

#include <algorithm>

#include "tapd/error.hpp"

namespace tapd::introspect {

using encoder::Matrix;
using encoder::Vector;

VocabularyFilter::VocabularyFilter(std::vector<TokenId> ids) : ids_(std::move(ids)) {
  std::sort(ids_.begin(), ids_.end());
  ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
  if (ids_.empty()) throw Error("vocabulary filter is empty");
  if (ids_.front() < 0) throw Error("vocabulary filter holds a negative id");
}

VocabularyFilter VocabularyFilter::from_dataset(const corpus::Dataset& dataset, const Tokenizer& tokenizer) {
  std::vector<TokenId> ids;
  for (const auto& ex : dataset.examples())
    for (TokenId id : tokenizer.encode(ex.text))
      if (!tokenizer.is_special(id)) ids.push_back(id);
  return VocabularyFilter(std::move(ids));
}

VocabularyFilter VocabularyFilter::restrict_to(std::size_t vocab_size) const {
  std::vector<TokenId> kept;
  for (TokenId id : ids_)
    if (static_cast<std::size_t>(id) < vocab_size) kept.push_back(id);
  if (kept.empty()) throw Error("vocabulary filter is empty after intersecting with the encoder vocabulary");
  return VocabularyFilter(std::move(kept));
}

namespace {

std::vector<ScoredWord> top_k(const Tokenizer& tokenizer, const std::vector<TokenId>& ids, const Vector& scores,
                              std::size_t k) {
  std::vector<ScoredWord> all;
  all.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i)
    all.push_back({ids[i], tokenizer.token(ids[i]), scores(static_cast<Eigen::Index>(i))});
  const auto better = [](const ScoredWord& a, const ScoredWord& b) {
    return a.score != b.score ? a.score > b.score : a.id < b.id;
  };
  const std::size_t n = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n), all.end(), better);
  all.resize(n);
  return all;
}

}  // namespace

std::vector<ScoredWord> nearest_words_for_stance(const trainer::Model& model, const std::string& target,
                                                 StanceLabel label, std::size_t k, const VocabularyFilter& filter,
                                                 std::span<const corpus::StanceExample> context, StanceSpace space) {
  if (k == 0) throw Error("k must be at least 1");
  if (model.head_kind != trainer::HeadKind::TargetAware)
    throw Error("stance-word analysis needs a target-aware verbalizer");
  const auto allowed = filter.restrict_to(model.encoder->spec().vocab_size);
  const auto& ids = allowed.ids();
  const Matrix words = model.encoder->input_embeddings(ids);
  const Vector stance = model.head.stance_vectors().row(static_cast<Eigen::Index>(index_of(label))).transpose();

  if (space == StanceSpace::Raw) return top_k(*model.tokenizer, ids, words * stance, k);

  std::vector<corpus::StanceExample> rendered_from(context.begin(), context.end());
  if (rendered_from.empty()) rendered_from.push_back({"probe", target, target, label});
  const auto batch = prompts::batch_render(model.pattern, rendered_from, *model.tokenizer, model.max_len);
  const auto outputs = model.encoder->encode(batch.instances);
  Vector h_target = Vector::Zero(static_cast<Eigen::Index>(model.head.d_h()));
  for (std::size_t i = 0; i < outputs.size(); ++i)
    h_target += verbalizer::pool_target(outputs[i].hidden, batch.instances[i].target_span);
  h_target /= static_cast<double>(outputs.size());

  const auto vts = verbalizer::compose_target_aware(h_target, model.head.stance_vectors());
  const Vector vt_hat = model.head.project_vt(vts[index_of(label)]);
  const auto& w = model.head.mask_weight().value;
  const Vector b = model.head.mask_bias().value.col(0);
  // proj_mask(e) · v = e · (W^T v) + b · v
  const Vector scores = (words * (w.transpose() * vt_hat)).array() + b.dot(vt_hat);
  return top_k(*model.tokenizer, ids, scores, k);
}

ScoredWord nearest_word_for_mask(const trainer::Model& model, const corpus::StanceExample& example,
                                 const VocabularyFilter& filter) {
  const auto allowed = filter.restrict_to(model.encoder->spec().vocab_size);
  const auto instance = prompts::render(model.pattern, example, *model.tokenizer, model.max_len);
  const auto outputs = model.encoder->encode(std::span<const prompts::PromptInstance>(&instance, 1));
  const Vector h_mask = outputs.front().hidden.row(static_cast<Eigen::Index>(instance.mask_index)).transpose();
  const Vector all = model.encoder->token_output_scores(h_mask);
  Vector scores(static_cast<Eigen::Index>(allowed.size()));
  for (std::size_t i = 0; i < allowed.size(); ++i) scores(static_cast<Eigen::Index>(i)) = all(allowed.ids()[i]);
  return top_k(*model.tokenizer, allowed.ids(), scores, 1).front();
}

std::vector<std::string> merge_subwords(std::span<const ScoredWord> words) {
  std::vector<std::string> out;
  for (const auto& w : words) {
    if (w.token.rfind("##", 0) == 0 && !out.empty())
      out.back() += w.token.substr(2);
    else
      out.push_back(w.token.rfind("##", 0) == 0 ? w.token.substr(2) : w.token);
  }
  return out;
}

StanceWordTable stance_word_table(const trainer::Model& model, const corpus::Dataset& data, std::size_t k,
                                  const VocabularyFilter& filter, StanceSpace space) {
  StanceWordTable table;
  for (const auto& target : data.targets()) {
    const auto subset = data.filter_target(target);
    StanceWordTable::Row row;
    row.target = target;
    row.favor = nearest_words_for_stance(model, target, StanceLabel::Favor, k, filter, subset.examples(), space);
    row.against = nearest_words_for_stance(model, target, StanceLabel::Against, k, filter, subset.examples(), space);
    row.none = nearest_words_for_stance(model, target, StanceLabel::None, k, filter, subset.examples(), space);
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::vector<MaskWordRow> mask_word_rows(const trainer::Model& model, std::span<const corpus::StanceExample> examples,
                                        const VocabularyFilter& filter) {
  const auto preds = trainer::predict(model, examples);
  std::vector<MaskWordRow> rows;
  for (std::size_t i = 0; i < examples.size(); ++i)
    rows.push_back({examples[i].id, examples[i].target, examples[i].text, examples[i].label, preds[i].label,
                    nearest_word_for_mask(model, examples[i], filter)});
  return rows;
}

namespace {

nlohmann::json words_json(const std::vector<ScoredWord>& words) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& w : words) out.push_back({{"id", w.id}, {"token", w.token}, {"score", w.score}});
  return out;
}

std::string joined(const std::vector<ScoredWord>& words) {
  std::string s;
  for (const auto& w : merge_subwords(words)) s += (s.empty() ? "" : ", ") + w;
  return s;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

}  // namespace

nlohmann::json to_json(const StanceWordTable& table) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : table.rows)
    rows.push_back({{"target", r.target},
                    {"FAVOR", words_json(r.favor)},
                    {"AGAINST", words_json(r.against)},
                    {"NONE", words_json(r.none)}});
  return rows;
}

nlohmann::json to_json(std::span<const MaskWordRow> rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows)
    out.push_back({{"id", r.example_id},
                   {"target", r.target},
                   {"text", r.text},
                   {"gold", to_string(r.gold)},
                   {"predicted", to_string(r.predicted)},
                   {"word", r.word.token},
                   {"score", r.word.score}});
  return out;
}

std::string render(const StanceWordTable& table) {
  std::size_t tw = 6;
  for (const auto& r : table.rows) tw = std::max(tw, corpus::target_abbreviation(r.target).size());
  std::string out = pad("Target", tw) + " | Favor | Against | None\n";
  for (const auto& r : table.rows)
    out += pad(corpus::target_abbreviation(r.target), tw) + " | " + joined(r.favor) + " | " + joined(r.against) +
           " | " + joined(r.none) + "\n";
  return out;
}

std::string render(std::span<const MaskWordRow> rows) {
  std::string out = "Text | Target | Gold | Predicted | Mask word\n";
  for (const auto& r : rows)
    out += r.text + " | " + corpus::target_abbreviation(r.target) + " | " + std::string(to_string(r.gold)) + " | " +
           std::string(to_string(r.predicted)) + " | " + r.word.token + "\n";
  return out;
}

}  // namespace tapd::introspect
