// Copyright 2026 The tapd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tapd/corpus.hpp"
#include "tapd/tokenizer.hpp"

namespace tapd::prompts {

enum class SegmentKind { Literal, Target, Text, Mask, Sep };

struct Segment {
  SegmentKind kind = SegmentKind::Literal;
  std::string literal;  // only for Literal

  friend bool operator==(const Segment&, const Segment&) = default;
};

/// A cloze template with exactly one target slot, one text slot and one mask.
class PromptPattern {
 public:
  /// Parses the brace syntax used by template files: {target}, {text},
  /// {mask} and {sep} are slots, everything else is literal text.
  static PromptPattern parse(std::string id, std::string_view template_text);

  /// "P1", "P2" or "P3".
  static PromptPattern builtin(std::string_view id);

  const std::string& id() const { return id_; }
  const std::vector<Segment>& segments() const { return segments_; }

  /// The template in brace syntax; parse(id, template_text()) == *this.
  std::string template_text() const;

  /// Surface string with the slots filled and the special tokens spelled
  /// "[MASK]" / "[SEP]".
  std::string render_text(const corpus::StanceExample& example) const;

  friend bool operator==(const PromptPattern&, const PromptPattern&) = default;

 private:
  std::string id_;
  std::vector<Segment> segments_;
};

/// Built-in patterns plus any loaded from template files, addressable by id.
class PatternRegistry {
 public:
  PatternRegistry();  // P1, P2, P3

  /// One template per line. A line may be prefixed by "<id><TAB>"; unnamed
  /// lines are numbered T1, T2, ... in file order. Blank lines and lines
  /// starting with '#' are skipped.
  void load_file(const std::filesystem::path& path);
  void add(PromptPattern pattern);

  const PromptPattern& get(std::string_view id) const;
  bool contains(std::string_view id) const;
  std::vector<std::string> ids() const;

 private:
  std::map<std::string, PromptPattern, std::less<>> patterns_;
};

/// Half-open token range.
struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool empty() const { return begin == end; }
  bool contains(std::size_t i) const { return i >= begin && i < end; }
  friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
};

struct PromptInstance {
  std::vector<TokenId> token_ids;
  std::size_t mask_index = 0;
  TokenSpan target_span;
  TokenSpan text_span;
  std::size_t text_tokens_dropped = 0;
  std::string example_id;
  std::string pattern_id;

  friend bool operator==(const PromptInstance&, const PromptInstance&) = default;
};

/// Tokenises `example` into `pattern`, prefixed by the sequence-start token.
/// Each segment is tokenised on its own so the mask position and target span
/// are known exactly. If the sequence exceeds `max_len`, text-slot tokens are
/// dropped from the end; nothing else is ever removed.
/// Throws Error when the target yields no tokens or fewer than one text token
/// would survive truncation.
PromptInstance render(const PromptPattern& pattern, const corpus::StanceExample& example,
                      const Tokenizer& tokenizer, std::size_t max_len);

struct PromptBatch {
  std::vector<PromptInstance> instances;
  std::size_t padded_length = 0;
  /// Attention extent of each instance (its unpadded token count).
  std::vector<std::size_t> lengths;

  /// Row-major ids padded with `pad_id` to padded_length.
  std::vector<TokenId> padded_ids(TokenId pad_id) const;
};

PromptBatch batch_render(const PromptPattern& pattern, std::span<const corpus::StanceExample> examples,
                         const Tokenizer& tokenizer, std::size_t max_len);

}  // namespace tapd::prompts
