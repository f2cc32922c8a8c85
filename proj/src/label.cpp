// Copyright 2026 The tapd Authors
// SPDX-License-Identifier: Apache-2.0

#include "tapd/label.hpp"

#include <algorithm>
#include <cctype>

namespace tapd {

std::string_view to_string(StanceLabel label) {
  switch (label) {
    case StanceLabel::Favor:
      return "FAVOR";
    case StanceLabel::None:
      return "NONE";
    case StanceLabel::Against:
      return "AGAINST";
  }
  return "NONE";
}

std::optional<StanceLabel> parse_label(std::string_view text) {
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
  std::string key(text);
  std::transform(key.begin(), key.end(), key.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (key == "favor" || key == "favour" || key == "support" || key == "argument_for") return StanceLabel::Favor;
  if (key == "against" || key == "oppose" || key == "argument_against") return StanceLabel::Against;
  if (key == "none" || key == "neutral" || key == "no-stance" || key == "noargument") return StanceLabel::None;
  return std::nullopt;
}

}  // namespace tapd
