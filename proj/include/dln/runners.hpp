#pragma once

// Whole pipelines driven by a JSON run configuration. Each command returns a
// JSON report; a report with "verdict": false means a check that should hold
// did not. Artifacts go to config["out"] when it is set.

#include <cstdint>
#include <string>
#include <vector>

#include "dln/io.hpp"

namespace dln {

inline constexpr std::uint64_t kDefaultSeed = 20180924;

/// Names accepted by run_command, in display order.
const std::vector<std::string>& command_names();

Json run_command(const std::string& command, const Json& config);

/// Resolves "dims"/"depth" of a config. A single width with a depth means a
/// uniform network.
NetSpec spec_from_config(const Json& config);

/// Resolves the target from "phi", "phi_scalar", "problem" or "problem_file";
/// defaults to the d_N x d_0 identity.
Problem problem_from_config(const Json& config, const NetSpec& spec);

/// Initial stack from "stack_file", or "init" with "std" / "a_scalar".
WeightStack init_from_config(const Json& config, const NetSpec& spec);

}  // namespace dln
