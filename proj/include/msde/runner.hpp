#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace msde {

inline constexpr const char* kVersion = "0.1.0";

struct RunOptions {
    std::string config_path;
    std::optional<std::string> out_dir;  // overrides output_dir from the config
    unsigned workers = 1;
    std::optional<std::uint64_t> seed_override;
};

/// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;

const std::vector<std::string>& subcommands();

/// Runs a subcommand and writes its artifacts plus manifest.json under the
/// output directory. Diagnostics go to stderr; the return value is the exit
/// status.
int run_subcommand(const std::string& name, const RunOptions& opts);

std::string sha256_hex(std::string_view bytes);

}  // namespace msde
