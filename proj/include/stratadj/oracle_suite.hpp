#pragma once

#include <string>
#include <vector>

#include "stratadj/core.hpp"

namespace stratadj {

struct NamedPopulation {
    std::string name;
    Population population;
};

enum class SuiteScale { small, large };

/// Built-in enumerable populations. Small: at most 10^4 assignments each;
/// large adds designs near 10^5.
std::vector<NamedPopulation> suite_fixtures(SuiteScale scale);

struct IdentityResult {
    std::string identity;
    std::string fixture;
    double error = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

struct SuiteOptions {
    SuiteScale scale = SuiteScale::small;
    int workers = 1;
    /// Perturbs one outcome of the first fixture after its oracle values are
    /// taken, so the enumeration side disagrees. Exercises the failure path.
    bool corrupt_fixture = false;
};

std::vector<IdentityResult> run_identity_suite(const SuiteOptions& options);

/// One line per identity plus a summary line. No timings, so the text is a
/// pure function of the options.
std::string format_identity_table(const std::vector<IdentityResult>& results);

}  // namespace stratadj
