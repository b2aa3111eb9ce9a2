#pragma once

#include <optional>
#include <string>

#include "asynclc/kernels.hpp"

namespace asynclc {

// "0.05", "n^-0.6", "4*n^-0.6" or "4n^-0.6"; "auto" gives nullopt.
std::optional<Bandwidth> parse_bandwidth(const std::string& text);

// Entry point of the command-line tool; returns the process exit code.
int run_cli(int argc, char** argv);

}  // namespace asynclc
