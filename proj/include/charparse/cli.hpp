#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace charparse {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs one command line (args[0] is the program name). Results go to
/// `out`, diagnostics to `err`; returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// The ablation grid's layer sets for an L-layer encoder:
/// {0, 0-(L/2-1), round(L/3)-(round(2L/3)-1), L/2-(L-1), L-1, all}.
std::vector<std::string> ablation_layer_sets(std::size_t n_layers);

}  // namespace charparse
