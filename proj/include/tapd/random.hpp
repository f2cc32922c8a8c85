// Copyright 2026 The tapd Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace tapd {

using Rng = std::mt19937_64;

/// Derives an independent seed for the named substream of `root`. Every
/// random decision in a run (splits, sampling, initialisation, batch order,
/// dropout) draws from its own substream so that adding a consumer never
/// perturbs the others.
std::uint64_t substream_seed(std::uint64_t root, std::string_view name);

inline Rng substream(std::uint64_t root, std::string_view name) {
  return Rng(substream_seed(root, name));
}

/// 64-bit FNV-1a; stable across platforms, used for naming and seeding.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

}  // namespace tapd
