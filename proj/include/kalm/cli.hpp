#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "kalm/gradcheck.hpp"

namespace kalm {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumeric = 3 };

/// Dispatches `args` (without the program name) to a subcommand.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Gradient check of the joint loss on a small model: d_model 8, 2 heads,
/// a 5-token input, 2 retrieved fragments and a ~30-token vocabulary. Uses
/// unit position scale and encoder init scale.
GradCheckReport tiny_model_gradcheck(std::uint64_t seed);

/// Splits "a,b,c" into trimmed fields. Empty fields are usage errors.
std::vector<std::string> split_csv(const std::string& text);

}  // namespace kalm
