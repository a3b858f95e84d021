#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace msde {

struct CriterionResult {
    int id = 0;
    std::string name;
    bool passed = false;
    std::vector<std::pair<std::string, double>> metrics;
    std::vector<std::string> notes;
    double seconds = 0.0;
};

struct AcceptanceOptions {
    std::uint64_t seed = 20240611;
    unsigned workers = 1;
};

inline constexpr int kCriterionCount = 9;

/// Runs one acceptance experiment (1..9) at its full size.
CriterionResult run_criterion(int id, const AcceptanceOptions& opts);

std::vector<CriterionResult> run_acceptance(std::span<const int> ids, const AcceptanceOptions& opts);

/// One line: "[PASS] 3 reflected-law oracle: key=value ...".
std::string format_result(const CriterionResult& r);

}  // namespace msde
