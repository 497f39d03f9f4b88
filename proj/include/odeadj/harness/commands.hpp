#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>

namespace odeadj::harness {

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2 };

struct CommandOptions {
    std::filesystem::path config;
    std::filesystem::path out_dir = ".";
    std::size_t parallel = 1;
    std::optional<std::uint64_t> seed_override;
};

// Each command loads the config, writes its files under out_dir, reports on
// `out`/`err` and returns an ExitCode.
int cmd_solve(const CommandOptions& opts, std::ostream& out, std::ostream& err);
int cmd_gradcheck(const CommandOptions& opts, std::ostream& out, std::ostream& err);
int cmd_bench(const CommandOptions& opts, std::ostream& out, std::ostream& err);
int cmd_train(const CommandOptions& opts, std::ostream& out, std::ostream& err);

}  // namespace odeadj::harness
