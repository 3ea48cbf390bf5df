#pragma once

#include <string>
#include <vector>

namespace featfuse::cli {

// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitUsage = 2,
  kExitIo = 3,
  kExitValidation = 4,
  kExitNumerical = 5,
};

inline constexpr const char* kArtifactVersion = "1.0.0";
inline constexpr const char* kEnvPrefix = "FEATFUSE_";
inline constexpr const char* kManifestName = "run_manifest.json";

// argv[0] is the program name.
int RunCli(int argc, const char* const* argv);
// Arguments without the program name.
int RunCli(const std::vector<std::string>& args);

}  // namespace featfuse::cli
