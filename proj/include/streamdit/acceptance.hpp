#pragma once

#include <string>
#include <vector>

#include "streamdit/config.hpp"

namespace streamdit {

struct CriterionResult {
    int id = 0;
    std::string name;
    bool pass = false;
    std::string detail;
};

/// Runs the full acceptance suite, printing one pass/fail line per criterion.
/// Training-backed criteria reuse one pipeline run under `cfg`.
std::vector<CriterionResult> run_acceptance(const Config& cfg, bool verbose = true);

bool all_passed(const std::vector<CriterionResult>& results);

}  // namespace streamdit
