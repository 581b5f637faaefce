#include "stratadj/oracle_suite.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "stratadj/error.hpp"
#include "stratadj/estimators.hpp"
#include "stratadj/numeric.hpp"
#include "stratadj/oracle.hpp"
#include "stratadj/randomization.hpp"

namespace stratadj {

namespace {

constexpr double kExactTol = 1e-12;
constexpr double kIdentityTol = 1e-10;
constexpr double kEquivalenceTol = 1e-8;
constexpr int kEquivalenceDraws = 20;

double dyadic(double v) { return std::round(v * 64.0) / 64.0; }

struct RandomSpec {
    std::vector<int> sizes;
    std::vector<int> treated;
    int k = 1;
    bool constant_effect = false;
};

Population random_population(std::uint64_t seed, const RandomSpec& spec) {
    Rng rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<StratumPotentials> strata;
    for (int n : spec.sizes) {
        StratumPotentials s{Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::MatrixXd(n, spec.k)};
        Eigen::VectorXd b1(spec.k);
        Eigen::VectorXd b0(spec.k);
        for (int c = 0; c < spec.k; ++c) {
            b1[c] = nd(rng);
            b0[c] = nd(rng);
        }
        for (int j = 0; j < n; ++j) {
            for (int c = 0; c < spec.k; ++c) s.x(j, c) = dyadic(nd(rng));
        }
        for (int j = 0; j < n; ++j) {
            const double noise0 = nd(rng);
            const double noise1 = nd(rng);
            s.y0[j] = dyadic(s.x.row(j).dot(b0) + noise0);
            s.y1[j] = spec.constant_effect ? s.y0[j] + 3.0 : dyadic(s.x.row(j).dot(b1) + noise1 + 1.0);
        }
        strata.push_back(std::move(s));
    }
    return Population(ExperimentDesign::from_counts(spec.sizes, spec.treated), std::move(strata));
}

Population fixed_population(std::vector<double> y1, std::vector<double> y0, std::vector<double> x) {
    const int n = static_cast<int>(y1.size());
    StratumPotentials s;
    s.y1 = Eigen::Map<Eigen::VectorXd>(y1.data(), n);
    s.y0 = Eigen::Map<Eigen::VectorXd>(y0.data(), n);
    s.x = x.empty() ? Eigen::MatrixXd(n, 0) : Eigen::MatrixXd(Eigen::Map<Eigen::VectorXd>(x.data(), n));
    return Population(ExperimentDesign::from_counts({n}, {n / 2}), {std::move(s)});
}

class Collector {
public:
    explicit Collector(std::string fixture) : fixture_(std::move(fixture)) {}

    void close(const std::string& identity, double lhs, double rhs, double base) {
        record(identity, std::abs(lhs - rhs), base * std::max(1.0, std::abs(rhs)));
    }

    void record(const std::string& identity, double error, double tolerance) {
        const bool pass = std::isfinite(error) && error <= tolerance;
        results_.push_back({identity, fixture_, error, tolerance, pass});
    }

    std::vector<IdentityResult> take() { return std::move(results_); }

private:
    std::string fixture_;
    std::vector<IdentityResult> results_;
};

double max_abs(const Eigen::MatrixXd& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

// Enumeration means of sum_i c_i s_iXX(a) and sum_i c_i s_iXy(a) for both arms.
void check_sample_moments(Collector& out, const Population& enum_pop, const PopulationMoments& m, std::uint64_t cap) {
    const auto& design = enum_pop.design();
    const int k = enum_pop.num_covariates();
    const int b = design.num_strata();
    std::vector<CompensatedSum> acc(static_cast<std::size_t>(2 * (k * k + k)));
    AssignmentEnumerator it(design, cap);
    Assignment a;
    std::uint64_t count = 0;
    while (it.next(a)) {
        const auto sums = stratum_summaries(observe(enum_pop, a));
        std::size_t slot = 0;
        for (Arm arm : {Arm::treated, Arm::control}) {
            Eigen::MatrixXd sxx = Eigen::MatrixXd::Zero(k, k);
            Eigen::VectorXd sxy = Eigen::VectorXd::Zero(k);
            for (int i = 0; i < b; ++i) {
                const auto& s = sums[static_cast<std::size_t>(i)][arm];
                sxx += design.weight(i) * *s.cov_xx;
                sxy += design.weight(i) * *s.cov_xy;
            }
            for (int r = 0; r < k; ++r) {
                for (int c = 0; c < k; ++c) acc[slot++].add(sxx(r, c));
            }
            for (int r = 0; r < k; ++r) acc[slot++].add(sxy[r]);
        }
        ++count;
    }
    std::size_t slot = 0;
    const double n = static_cast<double>(count);
    double err_xx = 0.0;
    double err_xy = 0.0;
    double scale_xx = std::max(1.0, max_abs(m.s_xx));
    double scale_xy = std::max({1.0, max_abs(m.s_xy1), max_abs(m.s_xy0)});
    for (int arm = 0; arm < 2; ++arm) {
        const Eigen::VectorXd& target_xy = arm == 0 ? m.s_xy1 : m.s_xy0;
        for (int r = 0; r < k; ++r) {
            for (int c = 0; c < k; ++c) err_xx = std::max(err_xx, std::abs(acc[slot++].value() / n - m.s_xx(r, c)));
        }
        for (int r = 0; r < k; ++r) err_xy = std::max(err_xy, std::abs(acc[slot++].value() / n - target_xy[r]));
    }
    out.record("sample_moments.s_xx", err_xx, kExactTol * scale_xx);
    out.record("sample_moments.s_xy", err_xy, kExactTol * scale_xy);
}

void check_projections(Collector& out, const Population& pop, const PopulationMoments& m, bool fit_defined,
                       std::uint64_t seed) {
    const auto& design = pop.design();
    const int b = design.num_strata();
    const double big_n = design.total_units();
    const auto pooled = population_projections(pop, ProjectionMode::pooled);
    const auto strat = population_projections(pop, ProjectionMode::per_stratum);

    {
        Eigen::VectorXd o1 = Eigen::VectorXd::Zero(pop.num_covariates());
        Eigen::VectorXd o0 = o1;
        for (int i = 0; i < b; ++i) {
            o1 += design.weight(i) * pooled.s_x_resid1[static_cast<std::size_t>(i)];
            o0 += design.weight(i) * pooled.s_x_resid0[static_cast<std::size_t>(i)];
        }
        const double scale = std::max({1.0, max_abs(m.s_xy1), max_abs(m.s_xy0)});
        out.record("orthogonality.pooled", std::max(max_abs(o1), max_abs(o0)), kIdentityTol * scale);
    }
    {
        double err = 0.0;
        double mean_err = 0.0;
        double scale = 1.0;
        for (int i = 0; i < b; ++i) {
            const auto iu = static_cast<std::size_t>(i);
            err = std::max({err, max_abs(strat.s_x_resid1[iu]), max_abs(strat.s_x_resid0[iu])});
            mean_err = std::max({mean_err, std::abs(strat.resid1[iu].mean()), std::abs(strat.resid0[iu].mean())});
            scale = std::max({scale, max_abs(m.strata[iu].s_xy1), max_abs(m.strata[iu].s_xy0)});
        }
        out.record("orthogonality.per_stratum", err, kIdentityTol * scale);
        out.record("residual_mean.per_stratum", mean_err, kIdentityTol * scale);
    }
    {
        double err = 0.0;
        double scale = 1.0;
        for (int i = 0; i < b; ++i) {
            const auto iu = static_cast<std::size_t>(i);
            const auto& sm = m.strata[iu];
            const Eigen::VectorXd& beta = pooled.beta1[iu];
            const double rhs =
                beta.dot(sm.s_xx * beta) + pooled.s2_resid1[iu] + 2.0 * pooled.s_x_resid1[iu].dot(beta);
            err = std::max(err, std::abs(sm.s2_y1 - rhs));
            scale = std::max(scale, std::abs(sm.s2_y1));
        }
        out.record("decomposition.s2_y1", err, kIdentityTol * scale);
    }
    {
        double err = 0.0;
        double scale = 1.0;
        for (int i = 0; i < b; ++i) {
            const auto iu = static_cast<std::size_t>(i);
            const auto& sxx = m.strata[iu].s_xx;
            const Eigen::VectorXd d1 = strat.beta1[iu] - pooled.beta1[iu];
            const Eigen::VectorXd d0 = strat.beta0[iu] - pooled.beta0[iu];
            err = std::max(err, std::abs(pooled.s2_resid1[iu] - d1.dot(sxx * d1) - strat.s2_resid1[iu]));
            err = std::max(err, std::abs(pooled.s2_resid0[iu] - d0.dot(sxx * d0) - strat.s2_resid0[iu]));
            scale = std::max({scale, pooled.s2_resid1[iu], pooled.s2_resid0[iu]});
        }
        out.record("decomposition.residual_ols_olsint", err, kIdentityTol * scale);
    }

    const auto gaps = variance_gaps(pop, pooled, strat);
    const double n_ols = big_n * pooled.sigma2;
    const double n_int = big_n * strat.sigma2;
    out.record("ordering.ols_int_le_ols", std::max(0.0, n_int - n_ols), kIdentityTol * std::max(1.0, n_ols));
    out.close("gap.ols_olsint", n_ols - n_int, gaps.gap_ols_olsint, kIdentityTol);
    if (gaps.gap_unadj_ols_exact) {
        out.close("gap.unadj_ols", big_n * m.sigma2_unadj - n_ols, gaps.gap_unadj_ols, kIdentityTol);
        out.record("ordering.ols_le_unadj", std::max(0.0, n_ols - big_n * m.sigma2_unadj),
                   kIdentityTol * std::max(1.0, n_ols));
    }

    if (!fit_defined) return;
    double err = 0.0;
    for (int r = 0; r < kEquivalenceDraws; ++r) {
        const auto obs = observe(pop, sample_assignment(design, derive_seed(seed, static_cast<std::uint64_t>(r))));
        const double two_step = estimate_ols(obs).tau_hat;
        const double single = estimate_ols_design_matrix(obs);
        err = std::max(err, std::abs(two_step - single) / std::max(1.0, std::abs(two_step)));
    }
    out.record("equivalence.design_matrix", err, kEquivalenceTol);
}

std::vector<IdentityResult> check_fixture(const NamedPopulation& f, const Population& enum_pop, int workers,
                                          std::uint64_t cap, std::uint64_t seed) {
    Collector out(f.name);
    const auto& pop = f.population;
    const auto& design = pop.design();
    const auto m = population_moments(pop);
    EnumerationOptions opts{cap, workers, false};

    const auto unadj = exact_estimator_moments(
        enum_pop, on_observed(enum_pop, [](const ObservedDataset& d) { return estimate_unadjusted(d).tau_hat; }), opts);
    out.close("unadj_moments.mean", unadj.mean, m.tau, kExactTol);
    out.close("unadj_moments.variance", unadj.variance, m.sigma2_unadj, kExactTol);

    const auto treated = exact_estimator_moments(
        enum_pop, on_observed(enum_pop, [](const ObservedDataset& d) { return weighted_arm_mean(d, Arm::treated); }),
        opts);
    out.close("treated_mean.mean", treated.mean, m.mean_y1, kExactTol);
    out.close("treated_mean.variance", treated.variance, m.sigma2_y1, kExactTol);

    const bool variance_defined = std::all_of(design.strata().begin(), design.strata().end(),
                                              [](const StratumDesign& s) { return s.n1 >= 2 && s.n0() >= 2; });
    if (variance_defined) {
        const auto var_hat = exact_estimator_moments(
            enum_pop,
            on_observed(enum_pop, [](const ObservedDataset& d) { return *estimate_unadjusted(d).var_hat; }), opts);
        CompensatedSum closed;
        for (int i = 0; i < design.num_strata(); ++i) {
            const double c = design.weight(i);
            closed.add(c * c * m.strata[static_cast<std::size_t>(i)].s2_tau / design.stratum(i).n);
        }
        out.close("gap.conservative", var_hat.mean - m.sigma2_unadj, closed.value(), kExactTol);
    }

    if (pop.num_covariates() >= 1) {
        if (variance_defined) check_sample_moments(out, enum_pop, m, cap);
        check_projections(out, pop, m, variance_defined, seed);
    }
    return out.take();
}

}  // namespace

std::vector<NamedPopulation> suite_fixtures(SuiteScale scale) {
    std::vector<NamedPopulation> out;
    out.push_back({"P0", fixed_population({1, 2, 3, 4}, {0, 1, 2, 3}, {})});
    out.push_back({"P1", fixed_population({1, 2, 3, 4}, {0, 0, 0, 0}, {})});
    out.push_back({"P0-X", fixed_population({1, 2, 3, 4}, {0, 1, 2, 3}, {0, 1, 2, 3})});
    out.push_back({"R1", random_population(101, {{6, 5}, {3, 2}, 1, false})});
    out.push_back({"R2", random_population(102, {{6, 8, 4}, {3, 4, 2}, 2, false})});
    out.push_back({"R3", random_population(103, {{5, 6, 4}, {2, 2, 2}, 1, true})});
    out.push_back({"R4", random_population(104, {{10, 6}, {5, 3}, 2, false})});
    out.push_back({"R5", random_population(105, {{3, 4, 5}, {1, 2, 2}, 1, false})});
    if (scale == SuiteScale::large) {
        out.push_back({"L1", random_population(201, {{10, 7, 5}, {5, 3, 2}, 2, false})});
        out.push_back({"L2", random_population(202, {{8, 8, 6}, {4, 4, 3}, 2, false})});
        out.push_back({"L3", random_population(203, {{12, 8}, {6, 3}, 3, false})});
    }
    return out;
}

std::vector<IdentityResult> run_identity_suite(const SuiteOptions& options) {
    const auto fixtures = suite_fixtures(options.scale);
    const std::uint64_t cap = 100'000;
    std::vector<IdentityResult> results;
    for (std::size_t f = 0; f < fixtures.size(); ++f) {
        const auto& fx = fixtures[f];
        std::vector<IdentityResult> part;
        if (options.corrupt_fixture && f == 0) {
            auto strata = fx.population.strata();
            strata.front().y1[0] += 0.5;
            const Population bad(fx.population.design(), std::move(strata));
            part = check_fixture(fx, bad, options.workers, cap, derive_seed(7, f));
        } else {
            part = check_fixture(fx, fx.population, options.workers, cap, derive_seed(7, f));
        }
        results.insert(results.end(), part.begin(), part.end());
    }
    return results;
}

std::string format_identity_table(const std::vector<IdentityResult>& results) {
    std::ostringstream out;
    char line[256];
    std::snprintf(line, sizeof line, "%-28s %-8s %12s %10s  %s\n", "identity", "fixture", "error", "tolerance",
                  "result");
    out << line;
    int passed = 0;
    for (const auto& r : results) {
        std::snprintf(line, sizeof line, "%-28s %-8s %12.3e %10.1e  %s\n", r.identity.c_str(), r.fixture.c_str(),
                      r.error, r.tolerance, r.pass ? "PASS" : "FAIL");
        out << line;
        passed += r.pass;
    }
    out << "summary: " << passed << "/" << results.size() << " identities passed\n";
    return out.str();
}

}  // namespace stratadj
