// Copyright 2026 The tapd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace tapd::csv {

struct Row {
  std::size_t line = 0;  // 1-based line where the record starts
  std::vector<std::string> fields;
};

/// RFC 4180 reader: quoted fields may contain separators, doubled quotes and
/// line breaks. A UTF-8 byte-order mark at the start is skipped. Blank lines
/// are ignored.
std::vector<Row> read_csv(std::string_view content, const std::string& source);

/// Tab-separated reader without quoting; CR before LF is dropped.
std::vector<Row> read_tsv(std::string_view content);

/// Quotes `field` only when it contains a comma, quote, CR or LF.
std::string escape(std::string_view field);

void write_row(std::ostream& out, const std::vector<std::string>& fields);

std::string read_file(const std::filesystem::path& path);

}  // namespace tapd::csv
