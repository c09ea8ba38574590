#pragma once

#include <string>
#include <vector>

#include "convtrans/gradcheck_suite.hpp"
#include "convtrans/metrics.hpp"
#include "convtrans/run_config.hpp"

namespace cts::capi {

std::string analyze_text(const RunConfig& config);
std::string analyze_json(const RunConfig& config);
/// Applies the "config" object of an analyze document.
void apply_config_json(RunConfig& config, const std::string& json);

std::string report_summary_text(const EvalReport& report);
std::string report_summary_json(const EvalReport& report);

std::string compare_text(const std::vector<CompareRow>& rows);
std::string compare_json(const std::vector<CompareRow>& rows);

std::string gradcheck_text(const std::vector<GradcheckCase>& cases);
std::string gradcheck_json(const std::vector<GradcheckCase>& cases);

}  // namespace cts::capi
