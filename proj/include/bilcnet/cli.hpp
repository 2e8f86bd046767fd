// SPDX-License-Identifier: Apache-2.0
//
// Subcommands of the bilcnet tool: gen, preprocess, train, eval, zeroshot,
// gradcheck.

#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace bilcnet {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitVerification = 3;

/// `args` excludes the program name. Never throws; returns an exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace bilcnet
