// Copyright 2026 The tapd Authors
// SPDX-License-Identifier: Apache-2.0

#include "tapd/prompts.hpp"

#include <algorithm>
#include <sstream>

#include "tapd/csv.hpp"
#include "tapd/error.hpp"

namespace tapd::prompts {

namespace {

struct SlotName {
  std::string_view name;
  SegmentKind kind;
};

constexpr SlotName kSlots[] = {{"target", SegmentKind::Target},
                               {"text", SegmentKind::Text},
                               {"mask", SegmentKind::Mask},
                               {"sep", SegmentKind::Sep}};

}  // namespace

PromptPattern PromptPattern::parse(std::string id, std::string_view template_text) {
  PromptPattern pattern;
  pattern.id_ = std::move(id);
  std::string literal;
  auto flush = [&] {
    if (!literal.empty()) pattern.segments_.push_back({SegmentKind::Literal, std::move(literal)});
    literal.clear();
  };
  for (std::size_t i = 0; i < template_text.size(); ++i) {
    const char c = template_text[i];
    if (c == '}') throw Error("template " + pattern.id_ + ": unmatched '}'");
    if (c != '{') {
      literal.push_back(c);
      continue;
    }
    const std::size_t close = template_text.find('}', i);
    if (close == std::string_view::npos) throw Error("template " + pattern.id_ + ": unterminated '{'");
    const std::string_view name = template_text.substr(i + 1, close - i - 1);
    auto slot = std::find_if(std::begin(kSlots), std::end(kSlots), [&](const SlotName& s) { return s.name == name; });
    if (slot == std::end(kSlots))
      throw Error("template " + pattern.id_ + ": unknown slot {" + std::string(name) + "}");
    flush();
    pattern.segments_.push_back({slot->kind, {}});
    i = close;
  }
  flush();

  auto count = [&](SegmentKind kind) {
    return std::count_if(pattern.segments_.begin(), pattern.segments_.end(),
                         [&](const Segment& s) { return s.kind == kind; });
  };
  if (count(SegmentKind::Mask) != 1) throw Error("template " + pattern.id_ + ": needs exactly one {mask}");
  if (count(SegmentKind::Target) != 1) throw Error("template " + pattern.id_ + ": needs exactly one {target}");
  if (count(SegmentKind::Text) != 1) throw Error("template " + pattern.id_ + ": needs exactly one {text}");
  return pattern;
}

PromptPattern PromptPattern::builtin(std::string_view id) {
  if (id == "P1") return parse("P1", "{target} is {mask}. {sep} {text}.");
  if (id == "P2") return parse("P2", "{target} ? {sep} {mask} , {text}.");
  if (id == "P3") return parse("P3", "The stance that {text} is {mask} on {target}.");
  throw Error("unknown built-in pattern '" + std::string(id) + "'");
}

std::string PromptPattern::template_text() const {
  std::string out;
  for (const auto& seg : segments_) {
    switch (seg.kind) {
      case SegmentKind::Literal:
        out += seg.literal;
        break;
      case SegmentKind::Target:
        out += "{target}";
        break;
      case SegmentKind::Text:
        out += "{text}";
        break;
      case SegmentKind::Mask:
        out += "{mask}";
        break;
      case SegmentKind::Sep:
        out += "{sep}";
        break;
    }
  }
  return out;
}

std::string PromptPattern::render_text(const corpus::StanceExample& example) const {
  std::string out;
  for (const auto& seg : segments_) {
    switch (seg.kind) {
      case SegmentKind::Literal:
        out += seg.literal;
        break;
      case SegmentKind::Target:
        out += example.target;
        break;
      case SegmentKind::Text:
        out += example.text;
        break;
      case SegmentKind::Mask:
        out += Tokenizer::kMask;
        break;
      case SegmentKind::Sep:
        out += Tokenizer::kSep;
        break;
    }
  }
  return out;
}

PatternRegistry::PatternRegistry() {
  for (const char* id : {"P1", "P2", "P3"}) add(PromptPattern::builtin(id));
}

void PatternRegistry::add(PromptPattern pattern) {
  const std::string id = pattern.id();
  patterns_.insert_or_assign(id, std::move(pattern));
}

void PatternRegistry::load_file(const std::filesystem::path& path) {
  std::istringstream in(csv::read_file(path));
  std::size_t unnamed = 0;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos || line.front() == '#') continue;
    std::string id;
    std::string body = line;
    if (const auto tab = line.find('\t'); tab != std::string::npos) {
      id = line.substr(0, tab);
      body = line.substr(tab + 1);
    } else {
      id = "T" + std::to_string(++unnamed);
    }
    try {
      add(PromptPattern::parse(id, body));
    } catch (const Error& e) {
      throw ParseError(path.string(), line_no, e.what());
    }
  }
}

const PromptPattern& PatternRegistry::get(std::string_view id) const {
  auto it = patterns_.find(id);
  if (it == patterns_.end()) throw Error("unknown prompt pattern '" + std::string(id) + "'");
  return it->second;
}

bool PatternRegistry::contains(std::string_view id) const { return patterns_.find(id) != patterns_.end(); }

std::vector<std::string> PatternRegistry::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, _] : patterns_) out.push_back(id);
  return out;
}

PromptInstance render(const PromptPattern& pattern, const corpus::StanceExample& example,
                      const Tokenizer& tokenizer, std::size_t max_len) {
  // Pieces are tokenised independently; the text slot is trimmed afterwards.
  std::vector<TokenId> before_text{tokenizer.cls_id()};
  std::vector<TokenId> text_ids;
  std::vector<TokenId> after_text;
  bool seen_text = false;
  std::size_t mask_pos = 0;  // position within its own piece
  bool mask_after_text = false;
  TokenSpan target_local;
  bool target_after_text = false;

  for (const auto& seg : pattern.segments()) {
    auto& piece = seen_text ? after_text : before_text;
    switch (seg.kind) {
      case SegmentKind::Literal: {
        const auto ids = tokenizer.encode(seg.literal);
        piece.insert(piece.end(), ids.begin(), ids.end());
        break;
      }
      case SegmentKind::Target: {
        const auto ids = tokenizer.encode(example.target);
        if (ids.empty()) throw Error("example '" + example.id + "': target tokenizes to zero tokens");
        target_local = {piece.size(), piece.size() + ids.size()};
        target_after_text = seen_text;
        piece.insert(piece.end(), ids.begin(), ids.end());
        break;
      }
      case SegmentKind::Text:
        text_ids = tokenizer.encode(example.text);
        seen_text = true;
        break;
      case SegmentKind::Mask:
        mask_pos = piece.size();
        mask_after_text = seen_text;
        piece.push_back(tokenizer.mask_id());
        break;
      case SegmentKind::Sep:
        piece.push_back(tokenizer.sep_id());
        break;
    }
  }

  const std::size_t fixed = before_text.size() + after_text.size();
  PromptInstance instance;
  if (fixed + text_ids.size() > max_len) {
    const std::size_t room = max_len > fixed ? max_len - fixed : 0;
    if (room < 1)
      throw Error("example '" + example.id + "': text empty after truncation to max_len " + std::to_string(max_len));
    instance.text_tokens_dropped = text_ids.size() - room;
    text_ids.resize(room);
  }
  if (text_ids.empty()) throw Error("example '" + example.id + "': text tokenizes to zero tokens");

  const std::size_t offset = before_text.size() + text_ids.size();
  instance.token_ids = std::move(before_text);
  instance.text_span = {instance.token_ids.size(), instance.token_ids.size() + text_ids.size()};
  instance.token_ids.insert(instance.token_ids.end(), text_ids.begin(), text_ids.end());
  instance.token_ids.insert(instance.token_ids.end(), after_text.begin(), after_text.end());
  instance.mask_index = mask_pos + (mask_after_text ? offset : 0);
  instance.target_span = target_local;
  if (target_after_text) {
    instance.target_span.begin += offset;
    instance.target_span.end += offset;
  }
  instance.example_id = example.id;
  instance.pattern_id = pattern.id();
  return instance;
}

std::vector<TokenId> PromptBatch::padded_ids(TokenId pad_id) const {
  std::vector<TokenId> out(instances.size() * padded_length, pad_id);
  for (std::size_t r = 0; r < instances.size(); ++r)
    std::copy(instances[r].token_ids.begin(), instances[r].token_ids.end(), out.begin() + r * padded_length);
  return out;
}

PromptBatch batch_render(const PromptPattern& pattern, std::span<const corpus::StanceExample> examples,
                         const Tokenizer& tokenizer, std::size_t max_len) {
  PromptBatch batch;
  batch.instances.reserve(examples.size());
  for (const auto& ex : examples) {
    try {
      batch.instances.push_back(render(pattern, ex, tokenizer, max_len));
    } catch (const Error& e) {
      throw Error(std::string("batch_render failed on example '") + ex.id + "': " + e.what());
    }
    batch.lengths.push_back(batch.instances.back().token_ids.size());
    batch.padded_length = std::max(batch.padded_length, batch.lengths.back());
  }
  return batch;
}

}  // namespace tapd::prompts
