// Copyright (C) 2026 RelightKit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>

namespace rlk {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

/// Entry point of the `relightkit` tool. Returns 0 on success, 1 on usage
/// errors and 2 on runtime errors.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rlk
