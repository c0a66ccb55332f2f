#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "star/theory.hpp"

namespace star::theory {

struct CheckResult {
    std::string name;
    std::size_t instances = 0;
    double min_margin = 0.0;  // most adverse slack seen (sign convention per check)
    std::size_t violations = 0;
    std::vector<std::uint64_t> failing_seeds;  // first few, for reproduction
};

struct SuiteReport {
    std::string suite;
    std::size_t trials = 0;
    std::uint64_t seed = 0;
    std::vector<CheckResult> checks;

    std::size_t violations_total() const {
        std::size_t v = 0;
        for (const auto& c : checks) v += c.violations;
        return v;
    }
};

// suite: geometric | offset | cover | isometry | corollary3 | all
SuiteReport run_theory_suite(const std::string& suite, std::size_t trials, std::uint64_t seed);

void write_suite_report(const SuiteReport& report, const std::string& path);

}  // namespace star::theory
