// Copyright 2026 The tapd Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <set>
#include <sstream>

#include "tapd/csv.hpp"
#include "tapd/error.hpp"
#include "tapd/label.hpp"
#include "tapd/random.hpp"
#include "tapd/tokenizer.hpp"

using namespace tapd;

TEST_CASE("labels keep the Favor, None, Against index order") {
  CHECK(index_of(StanceLabel::Favor) == 0);
  CHECK(index_of(StanceLabel::None) == 1);
  CHECK(index_of(StanceLabel::Against) == 2);
  for (std::size_t i = 0; i < kNumLabels; ++i) CHECK(index_of(label_at(i)) == i);
}

TEST_CASE("label parsing accepts corpus vocabularies case-insensitively") {
  CHECK(parse_label("FAVOR") == StanceLabel::Favor);
  CHECK(parse_label("favor") == StanceLabel::Favor);
  CHECK(parse_label("Argument_for") == StanceLabel::Favor);
  CHECK(parse_label("AGAINST") == StanceLabel::Against);
  CHECK(parse_label("argument_against") == StanceLabel::Against);
  CHECK(parse_label("NONE") == StanceLabel::None);
  CHECK(parse_label("NoArgument") == StanceLabel::None);
  CHECK_FALSE(parse_label("maybe").has_value());
  CHECK_FALSE(parse_label("").has_value());
  for (StanceLabel l : kAllLabels) CHECK(parse_label(to_string(l)) == l);
}

TEST_CASE("substream seeds are deterministic and name-sensitive") {
  CHECK(substream_seed(7, "split") == substream_seed(7, "split"));
  CHECK(substream_seed(7, "split") != substream_seed(8, "split"));
  CHECK(substream_seed(7, "split") != substream_seed(7, "splits"));
  std::set<std::uint64_t> seen;
  for (int i = 0; i < 1000; ++i) seen.insert(substream_seed(1, "stage-" + std::to_string(i)));
  CHECK(seen.size() == 1000);
  auto a = substream(3, "x");
  auto b = substream(3, "x");
  for (int i = 0; i < 10; ++i) CHECK(a() == b());
}

TEST_CASE("fnv1a64 matches published test vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("csv reader handles quoting, embedded newlines and a BOM") {
  const std::string content = "\xEF\xBB\xBFid,text\n1,\"a, b\"\n2,\"say \"\"hi\"\"\"\n\n3,\"two\nlines\"\r\n";
  const auto rows = csv::read_csv(content, "mem");
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].fields == std::vector<std::string>{"id", "text"});
  CHECK(rows[1].fields[1] == "a, b");
  CHECK(rows[2].fields[1] == "say \"hi\"");
  CHECK(rows[3].fields[1] == "two\nlines");
  CHECK(rows[3].line == 5);
}

TEST_CASE("csv rejects an unterminated quote") {
  CHECK_THROWS_AS(csv::read_csv("a,\"b\n", "mem"), ParseError);
}

TEST_CASE("csv write then read round-trips arbitrary fields") {
  std::mt19937_64 rng(11);
  const std::string alphabet = "ab ,\"\n\r;x#";
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::vector<std::string>> table;
    std::ostringstream out;
    const int rows = 1 + static_cast<int>(rng() % 5);
    for (int r = 0; r < rows; ++r) {
      std::vector<std::string> fields;
      for (int f = 0; f < 3; ++f) {
        std::string s = "v";  // never blank, so the row is never skipped
        const int len = static_cast<int>(rng() % 8);
        for (int i = 0; i < len; ++i) s.push_back(alphabet[rng() % alphabet.size()]);
        fields.push_back(s);
      }
      csv::write_row(out, fields);
      table.push_back(fields);
    }
    const auto back = csv::read_csv(out.str(), "mem");
    REQUIRE(back.size() == table.size());
    for (std::size_t r = 0; r < table.size(); ++r) CHECK(back[r].fields == table[r]);
  }
}

TEST_CASE("csv escape quotes only when needed") {
  CHECK(csv::escape("plain") == "plain");
  CHECK(csv::escape("a,b") == "\"a,b\"");
  CHECK(csv::escape("q\"") == "\"q\"\"\"");
}

TEST_CASE("tsv reader splits on tabs and drops CR") {
  const auto rows = csv::read_tsv("a\tb\r\nc\td\n");
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].fields == std::vector<std::string>{"a", "b"});
  CHECK(rows[1].fields == std::vector<std::string>{"c", "d"});
}

namespace {

Tokenizer tiny_tokenizer() {
  return Tokenizer({"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "the", "un", "##aff", "##able", "a", "##b", "b", ",",
                    "!", "fox"});
}

}  // namespace

TEST_CASE("wordpiece uses greedy longest-match-first") {
  const auto tok = tiny_tokenizer();
  const auto ids = tok.encode("The unaffable fox!");
  std::vector<std::string> pieces;
  for (auto id : ids) pieces.push_back(tok.token(id));
  CHECK(pieces == std::vector<std::string>{"the", "un", "##aff", "##able", "fox", "!"});
  CHECK(tok.decode(ids) == "the unaffable fox !");
}

TEST_CASE("words with no segmentation become [UNK]") {
  const auto tok = tiny_tokenizer();
  const auto ids = tok.encode("zzz");
  REQUIRE(ids.size() == 1);
  CHECK(ids[0] == tok.unk_id());
}

TEST_CASE("special tokens written verbatim stay whole") {
  const auto tok = tiny_tokenizer();
  const auto ids = tok.encode("the [MASK] , [SEP]");
  REQUIRE(ids.size() == 4);
  CHECK(ids[1] == tok.mask_id());
  CHECK(ids[3] == tok.sep_id());
  CHECK(tok.is_special(tok.mask_id()));
  CHECK_FALSE(tok.is_special(tok.id("fox")));
}

TEST_CASE("tokenizer construction validates the vocabulary") {
  CHECK_THROWS_AS(Tokenizer({"[PAD]", "[UNK]", "[CLS]", "[SEP]"}), Error);
  CHECK_THROWS_AS(Tokenizer({"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "a", "a"}), Error);
}

TEST_CASE("built vocabularies encode every seen word without [UNK]") {
  const std::vector<std::string> texts = {"Hello world, hello again!", "Another line; with punctuation?", "rare-words"};
  CHECK_THROWS_AS(Tokenizer::build(texts, 16), Error);
  for (std::size_t cap : {80u, 90u, 200u}) {
    const auto tok = Tokenizer::build(texts, cap);
    for (const auto& t : texts)
      for (auto id : tok.encode(t)) CHECK(id != tok.unk_id());
  }
  const auto a = Tokenizer::build(texts, 200);
  const auto b = Tokenizer::build(texts, 200);
  CHECK(a.vocabulary() == b.vocabulary());
  CHECK(a.fingerprint() == b.fingerprint());
  const std::vector<std::string> other = {"Hello world, hello again!", "Another line"};
  CHECK(a.fingerprint() != Tokenizer::build(other, 200).fingerprint());
}
