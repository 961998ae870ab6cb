#pragma once

// Command-line driver: bpe-learn, bpe-apply, bpe-undo, train, translate,
// score, params.
//
// Exit codes: 0 success, 2 input or configuration error, 64 usage error,
// 1 internal error.

#include <iosfwd>
#include <string>
#include <vector>

namespace mwnmt {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitInput = 2;
inline constexpr int kExitUsage = 64;

// Environment variable naming a default config file for `train`.
inline constexpr const char* kConfigEnv = "MWNMT_CONFIG";

// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mwnmt
