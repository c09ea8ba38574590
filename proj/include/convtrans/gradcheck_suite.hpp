#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "convtrans/gradcheck.hpp"

namespace cts {

struct GradcheckCase {
  std::string name;
  GradcheckReport report;
};

/// Names of the built-in checks, ops first and the full tiny model last.
std::vector<std::string> gradcheck_suite_names();

/// Runs the named checks (all when `names` is empty) in double precision at
/// `tolerance`. Unknown names raise UsageError.
std::vector<GradcheckCase> run_gradcheck_suite(const std::vector<std::string>& names, std::uint64_t seed,
                                               double tolerance = 1e-4);

}  // namespace cts
