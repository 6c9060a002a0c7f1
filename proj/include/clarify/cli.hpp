#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace clarify::cli {

/// Exit codes: 0 success, 1 input/config/checkpoint/usage error,
/// 2 numeric failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 1;
inline constexpr int kExitNumeric = 2;

/// Runs one command; `args` excludes the program name, so args[0] is the
/// command (gen-synth, pretrain, finetune, predict, ensemble, evaluate).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace clarify::cli
