// Copyright 2026 The tapd Authors
// SPDX-License-Identifier: Apache-2.0

#include "tapd/tokenizer.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <map>
#include <set>
#include <sstream>

#include "tapd/csv.hpp"
#include "tapd/error.hpp"
#include "tapd/random.hpp"

namespace tapd {

namespace {

constexpr std::size_t kMaxWordChars = 100;

bool is_punct(unsigned char c) { return c < 128 && std::ispunct(c); }

}  // namespace

Tokenizer::Tokenizer(std::vector<std::string> vocabulary) : vocabulary_(std::move(vocabulary)) {
  for (std::size_t i = 0; i < vocabulary_.size(); ++i) {
    if (!index_.emplace(vocabulary_[i], static_cast<TokenId>(i)).second)
      throw Error("duplicate vocabulary entry '" + vocabulary_[i] + "'");
  }
  auto require = [&](std::string_view tok) {
    const TokenId found = id(tok);
    if (found < 0) throw Error("vocabulary lacks special token " + std::string(tok));
    return found;
  };
  pad_ = require(kPad);
  unk_ = require(kUnk);
  cls_ = require(kCls);
  sep_ = require(kSep);
  mask_ = require(kMask);
  std::uint64_t h = fnv1a64("");
  for (const auto& tok : vocabulary_) h = fnv1a64(std::string(tok) + '\n', h);
  fingerprint_ = h;
}

Tokenizer Tokenizer::from_vocab_file(const std::filesystem::path& path) {
  std::istringstream in(csv::read_file(path));
  std::vector<std::string> vocab;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    vocab.push_back(line);
  }
  while (!vocab.empty() && vocab.back().empty()) vocab.pop_back();
  return Tokenizer(std::move(vocab));
}

Tokenizer Tokenizer::build(std::span<const std::string> texts, std::size_t max_size) {
  std::vector<std::string> vocab = {std::string(kPad), std::string(kUnk), std::string(kCls), std::string(kSep),
                                    std::string(kMask)};
  // Basic tokenisation does not depend on the vocabulary.
  const Tokenizer scratch(vocab);
  std::map<std::string, std::size_t> freq;
  std::set<char> chars;
  for (const auto& text : texts) {
    for (auto& word : scratch.basic_tokenize(text)) {
      for (char c : word) chars.insert(c);
      ++freq[word];
    }
  }
  for (char c : chars) vocab.emplace_back(1, c);
  for (char c : chars) vocab.push_back("##" + std::string(1, c));
  if (vocab.size() > max_size) throw Error("max vocabulary size too small for the character inventory");

  std::vector<std::pair<std::string, std::size_t>> words(freq.begin(), freq.end());
  std::stable_sort(words.begin(), words.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::set<std::string> present(vocab.begin(), vocab.end());
  for (const auto& [word, count] : words) {
    if (vocab.size() >= max_size) break;
    if (present.insert(word).second) vocab.push_back(word);
  }
  return Tokenizer(std::move(vocab));
}

std::vector<std::string> Tokenizer::basic_tokenize(std::string_view text) const {
  std::vector<std::string> words;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) words.push_back(std::move(current));
    current.clear();
  };
  static constexpr std::array<std::string_view, 5> kSpecials = {kPad, kUnk, kCls, kSep, kMask};
  for (std::size_t i = 0; i < text.size(); ++i) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (c == '[') {
      auto special = std::find_if(kSpecials.begin(), kSpecials.end(),
                                  [&](std::string_view s) { return text.substr(i, s.size()) == s; });
      if (special != kSpecials.end()) {
        flush();
        words.emplace_back(*special);
        i += special->size() - 1;
        continue;
      }
    }
    if (std::isspace(c) || c == 0) {
      flush();
    } else if (is_punct(c)) {
      flush();
      words.emplace_back(1, static_cast<char>(c));
    } else {
      current.push_back(c < 128 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
    }
  }
  flush();
  return words;
}

void Tokenizer::wordpiece(const std::string& word, std::vector<TokenId>& out) const {
  if (word.size() > kMaxWordChars) {
    out.push_back(unk_);
    return;
  }
  std::vector<TokenId> pieces;
  std::size_t start = 0;
  while (start < word.size()) {
    std::size_t end = word.size();
    TokenId found = -1;
    while (start < end) {
      std::string piece = word.substr(start, end - start);
      if (start > 0) piece = "##" + piece;
      if (auto it = index_.find(piece); it != index_.end()) {
        found = it->second;
        break;
      }
      --end;
    }
    if (found < 0) {
      out.push_back(unk_);
      return;
    }
    pieces.push_back(found);
    start = end;
  }
  out.insert(out.end(), pieces.begin(), pieces.end());
}

std::vector<TokenId> Tokenizer::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  for (const auto& word : basic_tokenize(text)) wordpiece(word, ids);
  return ids;
}

std::string Tokenizer::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId tid : ids) {
    const std::string& tok = token(tid);
    if (tok.size() > 2 && tok.compare(0, 2, "##") == 0) {
      out += tok.substr(2);
    } else {
      if (!out.empty()) out.push_back(' ');
      out += tok;
    }
  }
  return out;
}

TokenId Tokenizer::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? -1 : it->second;
}

bool Tokenizer::is_special(TokenId tid) const {
  return tid == pad_ || tid == unk_ || tid == cls_ || tid == sep_ || tid == mask_;
}

}  // namespace tapd
