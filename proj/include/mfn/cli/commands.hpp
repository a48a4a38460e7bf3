// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>

namespace mfn::cli {

inline constexpr int exit_ok = 0;
inline constexpr int exit_mismatch = 1; // verify-graph found a difference
inline constexpr int exit_config = 2;
inline constexpr int exit_data = 3;
inline constexpr int exit_numeric = 4;

/// Parses argv and runs one subcommand. Diagnostics and progress go to `err`,
/// reports to `out`. Never throws.
int run_command(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace mfn::cli
