// Copyright 2026 The tapd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tapd {

using TokenId = std::int32_t;

/// Uncased WordPiece tokenizer compatible with BERT-style vocab.txt files:
/// lower-casing, whitespace and punctuation splitting, then greedy
/// longest-match-first subword segmentation with "##" continuations.
class Tokenizer {
 public:
  static constexpr std::string_view kPad = "[PAD]";
  static constexpr std::string_view kUnk = "[UNK]";
  static constexpr std::string_view kCls = "[CLS]";
  static constexpr std::string_view kSep = "[SEP]";
  static constexpr std::string_view kMask = "[MASK]";

  /// Takes ownership of an id-ordered token list. Must contain all five
  /// special tokens and no duplicates.
  explicit Tokenizer(std::vector<std::string> vocabulary);

  static Tokenizer from_vocab_file(const std::filesystem::path& path);

  /// Builds a vocabulary from raw texts: special tokens, then every
  /// character seen (both as a word start and as a "##" continuation, so any
  /// word stays encodable), then whole words by descending frequency until
  /// `max_size` entries.
  static Tokenizer build(std::span<const std::string> texts, std::size_t max_size);

  /// Special tokens written verbatim (e.g. "[MASK]") are kept whole.
  std::vector<std::string> basic_tokenize(std::string_view text) const;
  std::vector<TokenId> encode(std::string_view text) const;

  /// Space-joined tokens with "##" continuations glued to their predecessor.
  std::string decode(std::span<const TokenId> ids) const;

  std::size_t size() const { return vocabulary_.size(); }
  const std::vector<std::string>& vocabulary() const { return vocabulary_; }
  const std::string& token(TokenId id) const { return vocabulary_.at(static_cast<std::size_t>(id)); }
  /// -1 when absent.
  TokenId id(std::string_view token) const;
  bool is_special(TokenId id) const;

  TokenId pad_id() const { return pad_; }
  TokenId unk_id() const { return unk_; }
  TokenId cls_id() const { return cls_; }
  TokenId sep_id() const { return sep_; }
  TokenId mask_id() const { return mask_; }

  /// Stable hash of the id-ordered vocabulary.
  std::uint64_t fingerprint() const { return fingerprint_; }

 private:
  void wordpiece(const std::string& word, std::vector<TokenId>& out) const;

  std::vector<std::string> vocabulary_;
  std::unordered_map<std::string, TokenId> index_;
  TokenId pad_ = -1, unk_ = -1, cls_ = -1, sep_ = -1, mask_ = -1;
  std::uint64_t fingerprint_ = 0;
};

}  // namespace tapd
