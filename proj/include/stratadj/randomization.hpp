#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "stratadj/core.hpp"

namespace stratadj {

using BigCount = boost::multiprecision::cpp_int;

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Seed of the independent stream `index` under `master`.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept;

using Rng = std::mt19937_64;

/// Draws one stratified complete randomization. Stratum i consumes its own
/// stream derive_seed(seed, i), so draws do not depend on stratum order.
Assignment sample_assignment(const ExperimentDesign& design, std::uint64_t seed);

/// Product of C(n_i, n1_i) over strata, exact.
BigCount count_assignments(const ExperimentDesign& design);

constexpr std::uint64_t kDefaultEnumerationCap = 1'000'000;

/// Lazy, restartable walk over every assignment of a design. Within a stratum
/// treated index sets advance in lexicographic order; the last stratum varies
/// fastest.
class AssignmentEnumerator {
public:
    explicit AssignmentEnumerator(const ExperimentDesign& design,
                                  std::uint64_t cap = kDefaultEnumerationCap);

    std::uint64_t size() const noexcept { return total_; }

    /// Rewinds to the first assignment.
    void reset();

    /// Writes the next assignment into `out`; false once exhausted.
    bool next(Assignment& out);

private:
    void write(Assignment& out) const;
    bool advance_stratum(std::size_t i);

    std::vector<StratumDesign> strata_;
    std::vector<std::vector<int>> combos_;
    std::uint64_t total_ = 0;
    bool started_ = false;
    bool done_ = false;
};

/// Materialized enumeration; for small designs and tests.
std::vector<Assignment> enumerate_assignments(const ExperimentDesign& design,
                                              std::uint64_t cap = kDefaultEnumerationCap);

}  // namespace stratadj
