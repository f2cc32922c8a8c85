// Copyright 2026 The tapd Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

int main(int argc, char** argv) { return tapd::cli::main(argc, argv); }
