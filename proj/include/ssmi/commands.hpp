#pragma once

#include <optional>
#include <string>

#include "ssmi/errors.hpp"

namespace ssmi {

// Exit codes (also in README):
//   0 success, 1 usage, 2 config parse, 3 compatibility/stage,
//   4 training divergence, 5 checkpoint/report format, 6 contract violation,
//   7 other internal error.
constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitParse = 2;
constexpr int kExitCompat = 3;
constexpr int kExitTraining = 4;
constexpr int kExitFormat = 5;
constexpr int kExitContract = 6;
constexpr int kExitInternal = 7;

struct CliOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> steps;
    std::optional<double> lr;
    std::optional<double> lambda;
    std::optional<std::string> out;  // checkpoint (train) or report (eval) path
    std::optional<std::string> log;
};

int cmd_pretrain(const std::string& config_path, const CliOverrides& ov);
int cmd_finetune(const std::string& config_path, const std::string& init_checkpoint,
                 const CliOverrides& ov);
int cmd_eval(const std::string& checkpoint_path, const std::string& mode,
             const std::optional<std::string>& config_path, const CliOverrides& ov);
int cmd_report(const std::string& report_path);

// Full argument parsing + dispatch + error-to-exit-code mapping; main() is a
// thin wrapper so tests can drive the CLI in-process.
int run_cli(int argc, const char* const* argv);

}  // namespace ssmi
