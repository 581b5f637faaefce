#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stratadj/core.hpp"
#include "stratadj/error.hpp"

namespace testing {

using stratadj::ExperimentDesign;
using stratadj::ObservedDataset;
using stratadj::Population;
using stratadj::StratumObservations;
using stratadj::StratumPotentials;

inline Population single_stratum(std::vector<double> y1, std::vector<double> y0, std::vector<double> x = {}) {
    const int n = static_cast<int>(y1.size());
    StratumPotentials s;
    s.y1 = Eigen::Map<Eigen::VectorXd>(y1.data(), n);
    s.y0 = Eigen::Map<Eigen::VectorXd>(y0.data(), n);
    s.x = x.empty() ? Eigen::MatrixXd(n, 0) : Eigen::MatrixXd(Eigen::Map<Eigen::VectorXd>(x.data(), n));
    return Population(ExperimentDesign::from_counts({n}, {n / 2}), {std::move(s)});
}

// One stratum, n = 4, n1 = 2, y(1) = (1,2,3,4), y(0) = (0,1,2,3).
inline Population p0() { return single_stratum({1, 2, 3, 4}, {0, 1, 2, 3}); }
inline Population p0x() { return single_stratum({1, 2, 3, 4}, {0, 1, 2, 3}, {0, 1, 2, 3}); }
inline Population p1() { return single_stratum({1, 2, 3, 4}, {0, 0, 0, 0}); }

inline stratadj::Assignment first_two_treated() { return {{{1, 1, 0, 0}}}; }

struct PopulationSpec {
    std::vector<int> sizes;
    std::vector<int> treated;
    int k = 1;
    double effect_spread = 1.0;  // 0 gives a constant unit effect
    bool shared_slopes = false;
};

/// Random population with linear signal plus noise; covariates N(0,1).
inline Population random_population(std::uint64_t seed, const PopulationSpec& spec) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    Eigen::VectorXd shared1(spec.k);
    Eigen::VectorXd shared0(spec.k);
    for (int c = 0; c < spec.k; ++c) {
        shared1[c] = nd(rng);
        shared0[c] = nd(rng);
    }
    std::vector<StratumPotentials> strata;
    for (int n : spec.sizes) {
        Eigen::VectorXd b1 = shared1;
        Eigen::VectorXd b0 = shared0;
        if (!spec.shared_slopes) {
            for (int c = 0; c < spec.k; ++c) {
                b1[c] = nd(rng);
                b0[c] = nd(rng);
            }
        }
        StratumPotentials s{Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::MatrixXd(n, spec.k)};
        for (int j = 0; j < n; ++j) {
            for (int c = 0; c < spec.k; ++c) s.x(j, c) = nd(rng);
        }
        for (int j = 0; j < n; ++j) {
            s.y0[j] = s.x.row(j).dot(b0) + nd(rng);
            s.y1[j] = s.y0[j] + 1.0 + spec.effect_spread * (s.x.row(j).dot(b1 - b0) + nd(rng));
        }
        strata.push_back(std::move(s));
    }
    return Population(ExperimentDesign::from_counts(spec.sizes, spec.treated), std::move(strata));
}

/// All index subsets of {0..n-1} with exactly m elements, as bitmasks.
inline std::vector<std::uint32_t> subsets(int n, int m) {
    std::vector<std::uint32_t> out;
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
        if (__builtin_popcount(mask) == m) out.push_back(mask);
    }
    return out;
}

/// Brute-force walk over every assignment using nested bitmask subsets.
template <class F>
void for_each_assignment(const ExperimentDesign& design, F&& f) {
    std::vector<std::vector<std::uint32_t>> choices;
    for (const auto& s : design.strata()) choices.push_back(subsets(s.n, s.n1));
    std::vector<std::size_t> pos(choices.size(), 0);
    while (true) {
        stratadj::Assignment a;
        for (std::size_t i = 0; i < choices.size(); ++i) {
            const int n = design.strata()[i].n;
            std::vector<std::uint8_t> z(static_cast<std::size_t>(n));
            for (int j = 0; j < n; ++j) z[static_cast<std::size_t>(j)] = (choices[i][pos[i]] >> j) & 1u;
            a.z.push_back(std::move(z));
        }
        f(a);
        std::size_t i = choices.size();
        while (i > 0) {
            --i;
            if (++pos[i] < choices[i].size()) break;
            pos[i] = 0;
            if (i == 0) return;
        }
        if (choices.empty()) return;
    }
}

/// Plain (n - 1) variance without compensation, for cross-checks.
inline double naive_var(const Eigen::VectorXd& v) {
    const double m = v.mean();
    return (v.array() - m).square().sum() / static_cast<double>(v.size() - 1);
}

inline Eigen::MatrixXd naive_cov(const Eigen::MatrixXd& x) {
    const Eigen::MatrixXd c = x.rowwise() - x.colwise().mean();
    return c.transpose() * c / static_cast<double>(x.rows() - 1);
}

template <class F>
bool throws_kind(F&& f, stratadj::ErrorKind kind) {
    try {
        f();
    } catch (const stratadj::Error& e) {
        return e.kind() == kind;
    }
    return false;
}

template <class F>
std::string error_message(F&& f) {
    try {
        f();
    } catch (const stratadj::Error& e) {
        return e.what();
    }
    return {};
}

}  // namespace testing
