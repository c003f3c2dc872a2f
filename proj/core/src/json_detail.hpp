#pragma once

#include <json.hpp>

#include "fmprune/pruning.hpp"

namespace fmprune::detail {

nlohmann::json savings_json(const SavingsReport& report);

}  // namespace fmprune::detail
