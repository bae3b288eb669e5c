#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace photonchain::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIo = 3;
inline constexpr int kExitDataMismatch = 4;
inline constexpr int kExitMissingStage = 5;

inline constexpr const char* kVersion = "1.0.0";

/// Runs one command. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace photonchain::cli
