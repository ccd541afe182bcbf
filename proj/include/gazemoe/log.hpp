#pragma once

#include <spdlog/spdlog.h>

namespace gazemoe {

/// Shared stderr logger. Level comes from GAZEMOE_LOG (error|info|debug),
/// defaulting to warn.
spdlog::logger& log();

}  // namespace gazemoe
