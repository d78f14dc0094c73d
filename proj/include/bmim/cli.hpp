#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace bmim::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitGradcheck = 4;

// Subcommands: synth, train, eval, ablate, gradcheck, export-embeddings.
int run(int argc, char** argv);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace bmim::cli
