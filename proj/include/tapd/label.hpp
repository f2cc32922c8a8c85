// Copyright 2026 The tapd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace tapd {

/// Stance of a text towards a target. The enumerator values double as
/// vector indices, so the order (Favor, None, Against) is part of the ABI
/// of every stance-indexed array in the project.
enum class StanceLabel : std::size_t { Favor = 0, None = 1, Against = 2 };

inline constexpr std::size_t kNumLabels = 3;
inline constexpr std::array<StanceLabel, kNumLabels> kAllLabels = {
    StanceLabel::Favor, StanceLabel::None, StanceLabel::Against};

constexpr std::size_t index_of(StanceLabel label) { return static_cast<std::size_t>(label); }
constexpr StanceLabel label_at(std::size_t index) { return kAllLabels.at(index); }

/// Canonical spelling: "FAVOR", "NONE", "AGAINST".
std::string_view to_string(StanceLabel label);

/// Case-insensitive match against the label vocabularies used by the
/// supported corpora (favor/support/argument_for, against/oppose/
/// argument_against, none/neutral/no-stance/noargument).
std::optional<StanceLabel> parse_label(std::string_view text);

}  // namespace tapd
