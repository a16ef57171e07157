// Copyright (C) 2026 The worldforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace forge {

/// Exit codes of `run`.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the `forge` tool. `args[0]` is the program name.
///
///   forge [--config F] [--seed N] [--dry-run] <t2i|video|train|edit|eval|stats|review-serve|export> ...
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace forge
