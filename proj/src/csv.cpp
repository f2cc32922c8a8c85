// Copyright 2026 The tapd Authors
// SPDX-License-Identifier: Apache-2.0

#include "tapd/csv.hpp"

#include <fstream>
#include <sstream>

#include "tapd/error.hpp"

namespace tapd::csv {

namespace {

std::string_view strip_bom(std::string_view content) {
  if (content.size() >= 3 && content.substr(0, 3) == "\xEF\xBB\xBF") content.remove_prefix(3);
  return content;
}

bool is_blank(const Row& row) { return row.fields.size() == 1 && row.fields.front().empty(); }

}  // namespace

std::vector<Row> read_csv(std::string_view content, const std::string& source) {
  content = strip_bom(content);
  std::vector<Row> rows;
  Row row;
  std::string field;
  std::size_t line = 1;
  row.line = line;
  bool quoted = false;
  bool field_started_quoted = false;
  std::size_t quote_line = 0;

  auto end_field = [&] {
    row.fields.push_back(std::move(field));
    field.clear();
    field_started_quoted = false;
  };
  auto end_row = [&] {
    end_field();
    if (!is_blank(row)) rows.push_back(std::move(row));
    row = Row{};
    row.line = line;
  };

  for (std::size_t i = 0; i < content.size(); ++i) {
    const char c = content[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field.empty() || field_started_quoted)
          throw ParseError(source, line, "unexpected quote inside unquoted field");
        quoted = true;
        field_started_quoted = true;
        quote_line = line;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        if (i + 1 < content.size() && content[i + 1] == '\n') break;
        field.push_back(c);
        break;
      case '\n':
        ++line;
        end_row();
        break;
      default:
        if (field_started_quoted)
          throw ParseError(source, line, "characters after closing quote");
        field.push_back(c);
    }
  }
  if (quoted) throw ParseError(source, quote_line, "unterminated quoted field");
  if (!field.empty() || !row.fields.empty() || field_started_quoted) end_row();
  return rows;
}

std::vector<Row> read_tsv(std::string_view content) {
  content = strip_bom(content);
  std::vector<Row> rows;
  std::size_t line = 0;
  std::size_t pos = 0;
  while (pos <= content.size()) {
    std::size_t eol = content.find('\n', pos);
    if (eol == std::string_view::npos) eol = content.size();
    std::string_view text = content.substr(pos, eol - pos);
    ++line;
    if (!text.empty() && text.back() == '\r') text.remove_suffix(1);
    if (!text.empty()) {
      Row row;
      row.line = line;
      std::size_t start = 0;
      while (true) {
        const std::size_t tab = text.find('\t', start);
        if (tab == std::string_view::npos) {
          row.fields.emplace_back(text.substr(start));
          break;
        }
        row.fields.emplace_back(text.substr(start, tab - start));
        start = tab + 1;
      }
      rows.push_back(std::move(row));
    }
    if (eol == content.size()) break;
    pos = eol + 1;
  }
  return rows;
}

std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void write_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out << ',';
    out << escape(fields[i]);
  }
  out << '\n';
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace tapd::csv
