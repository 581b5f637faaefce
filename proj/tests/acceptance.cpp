// Acceptance gate: one [PASS]/[FAIL] line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "stratadj/cli.hpp"
#include "stratadj/error.hpp"
#include "stratadj/estimators.hpp"
#include "stratadj/oracle.hpp"
#include "stratadj/oracle_suite.hpp"
#include "stratadj/randomization.hpp"
#include "stratadj/simulation.hpp"
#include "support.hpp"

using namespace stratadj;

namespace {

using Clock = std::chrono::steady_clock;

int failures = 0;

void report(const std::string& id, bool pass, const std::string& detail, double seconds) {
    std::printf("[%s] %s %s (%.1f s)\n", pass ? "PASS" : "FAIL", id.c_str(), detail.c_str(), seconds);
    std::fflush(stdout);
    if (!pass) ++failures;
}

std::string fmt(const char* f, double a) {
    char buf[96];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double exact_tol(double ref) { return 1e-12 * std::max(1.0, std::abs(ref)); }

// ---- test-side population formulas ------------------------------------------

double ref_tau(const Population& pop) {
    double t = 0.0;
    for (int i = 0; i < pop.design().num_strata(); ++i) {
        t += pop.design().weight(i) * (pop.stratum(i).y1 - pop.stratum(i).y0).mean();
    }
    return t;
}

double ref_sigma2_unadj(const Population& pop) {
    double v = 0.0;
    for (int i = 0; i < pop.design().num_strata(); ++i) {
        const auto& s = pop.stratum(i);
        const auto& d = pop.design().stratum(i);
        const double c = pop.design().weight(i);
        v += c * c * (testing::naive_var(s.y1) / d.n1 + testing::naive_var(s.y0) / d.n0() -
                      testing::naive_var(s.y1 - s.y0) / d.n);
    }
    return v;
}

double ref_conservative_gap(const Population& pop) {
    double g = 0.0;
    for (int i = 0; i < pop.design().num_strata(); ++i) {
        const double c = pop.design().weight(i);
        g += c * c * testing::naive_var(pop.stratum(i).y1 - pop.stratum(i).y0) / pop.design().stratum(i).n;
    }
    return g;
}

Eigen::VectorXd centered(const Eigen::VectorXd& v) { return (v.array() - v.mean()).matrix(); }

Eigen::MatrixXd centered(const Eigen::MatrixXd& x) { return x.rowwise() - x.colwise().mean(); }

struct RefProjection {
    std::vector<Eigen::VectorXd> b1, b0;
    double sigma2 = 0.0;
};

// Residual-based asymptotic variance with pooled (sum c S_XX)^-1 sum c S_Xy or
// per-stratum S_XX^-1 S_Xy slopes.
RefProjection ref_projection(const Population& pop, bool per_stratum) {
    const int b = pop.design().num_strata();
    const int k = pop.num_covariates();
    RefProjection out;
    Eigen::MatrixXd sxx = Eigen::MatrixXd::Zero(k, k);
    Eigen::VectorXd s1 = Eigen::VectorXd::Zero(k);
    Eigen::VectorXd s0 = Eigen::VectorXd::Zero(k);
    for (int i = 0; i < b; ++i) {
        const auto& s = pop.stratum(i);
        const double n = s.y1.size();
        const Eigen::MatrixXd xc = centered(s.x);
        const Eigen::MatrixXd cxx = xc.transpose() * xc / (n - 1);
        const Eigen::VectorXd c1 = xc.transpose() * centered(s.y1) / (n - 1);
        const Eigen::VectorXd c0 = xc.transpose() * centered(s.y0) / (n - 1);
        if (per_stratum) {
            out.b1.push_back(cxx.ldlt().solve(c1));
            out.b0.push_back(cxx.ldlt().solve(c0));
        }
        const double c = pop.design().weight(i);
        sxx += c * cxx;
        s1 += c * c1;
        s0 += c * c0;
    }
    if (!per_stratum) {
        out.b1.assign(static_cast<std::size_t>(b), sxx.ldlt().solve(s1));
        out.b0.assign(static_cast<std::size_t>(b), sxx.ldlt().solve(s0));
    }
    for (int i = 0; i < b; ++i) {
        const auto& s = pop.stratum(i);
        const auto& d = pop.design().stratum(i);
        const auto iu = static_cast<std::size_t>(i);
        const Eigen::MatrixXd xc = centered(s.x);
        const Eigen::VectorXd e1 = centered(s.y1) - xc * out.b1[iu];
        const Eigen::VectorXd e0 = centered(s.y0) - xc * out.b0[iu];
        const double c = pop.design().weight(i);
        out.sigma2 += c * c * (testing::naive_var(e1) / d.n1 + testing::naive_var(e0) / d.n0() -
                               testing::naive_var(e1 - e0) / d.n);
    }
    return out;
}

std::vector<Population> exact_fixtures() {
    std::vector<Population> out;
    for (auto& f : suite_fixtures(SuiteScale::small)) out.push_back(f.population);
    return out;
}

bool arms_at_least_two(const Population& pop) {
    for (const auto& s : pop.design().strata()) {
        if (s.n1 < 2 || s.n0() < 2) return false;
    }
    return true;
}

bool constant_effect(const Population& pop) {
    for (const auto& s : pop.strata()) {
        const Eigen::VectorXd t = s.y1 - s.y0;
        if ((t.array() - t[0]).abs().maxCoeff() != 0.0) return false;
    }
    return true;
}

// ---- criteria -----------------------------------------------------------------

void ac1() {
    const auto t0 = Clock::now();
    const auto fixtures = exact_fixtures();
    bool pass = fixtures.size() >= 5;
    double worst = 0.0;
    for (const auto& pop : fixtures) {
        pass = pass && count_assignments(pop.design()) <= 100000;
        const auto e = exact_estimator_moments(
            pop, on_observed(pop, [](const ObservedDataset& d) { return estimate_unadjusted(d).tau_hat; }));
        const double tau = ref_tau(pop);
        const double var = ref_sigma2_unadj(pop);
        worst = std::max({worst, std::abs(e.mean - tau) / exact_tol(tau) * 1e-12,
                          std::abs(e.variance - var) / exact_tol(var) * 1e-12});
        pass = pass && e.skipped == 0 && std::abs(e.mean - tau) <= exact_tol(tau) &&
               std::abs(e.variance - var) <= exact_tol(var);
    }
    const double secs = seconds_since(t0);
    pass = pass && secs < 30.0;
    report("AC1", pass,
           "unadj enumeration mean/variance on " + std::to_string(fixtures.size()) + " fixtures, max scaled error " +
               fmt("%.2e", worst) + " (tol 1e-12, runtime < 30 s)",
           secs);
}

void ac2() {
    const auto t0 = Clock::now();
    bool pass = true;
    double worst = 0.0;
    for (const auto& pop : exact_fixtures()) {
        const auto e = exact_estimator_moments(
            pop, on_observed(pop, [](const ObservedDataset& d) { return weighted_arm_mean(d, Arm::treated); }));
        double mean = 0.0;
        double var = 0.0;
        for (int i = 0; i < pop.design().num_strata(); ++i) {
            const double c = pop.design().weight(i);
            const auto& d = pop.design().stratum(i);
            mean += c * pop.stratum(i).y1.mean();
            var += c * c * testing::naive_var(pop.stratum(i).y1) * (1.0 / d.n1 - 1.0 / d.n);
        }
        worst = std::max({worst, std::abs(e.mean - mean) / exact_tol(mean) * 1e-12,
                          std::abs(e.variance - var) / exact_tol(var) * 1e-12});
        pass = pass && std::abs(e.mean - mean) <= exact_tol(mean) && std::abs(e.variance - var) <= exact_tol(var);
    }
    report("AC2", pass, "weighted treated mean enumeration, max scaled error " + fmt("%.2e", worst) + " (tol 1e-12)",
           seconds_since(t0));
}

void ac3() {
    const auto t0 = Clock::now();
    bool pass = true;
    double worst = 0.0;
    int used = 0;
    int constant = 0;
    for (const auto& pop : exact_fixtures()) {
        if (!arms_at_least_two(pop)) continue;
        ++used;
        const auto e = exact_estimator_moments(
            pop, on_observed(pop, [](const ObservedDataset& d) { return *estimate_unadjusted(d).var_hat; }));
        const double bias = e.mean - ref_sigma2_unadj(pop);
        const double gap = ref_conservative_gap(pop);
        worst = std::max(worst, std::abs(bias - gap) / exact_tol(gap) * 1e-12);
        pass = pass && std::abs(bias - gap) <= exact_tol(gap);
        if (constant_effect(pop)) {
            ++constant;
            pass = pass && std::abs(bias) <= 1e-12;
        } else {
            pass = pass && bias > 1e-12;
        }
    }
    pass = pass && constant >= 1 && used > constant;
    report("AC3", pass,
           "conservativeness gap on " + std::to_string(used) + " fixtures (" + std::to_string(constant) +
               " constant-effect, gap zero), max scaled error " + fmt("%.2e", worst) + " (tol 1e-12)",
           seconds_since(t0));
}

void ac4() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(4004);
    int done = 0;
    int skipped = 0;
    double worst = 0.0;
    std::uint64_t seed = 0;
    while (done < 50) {
        ++seed;
        const int b = std::uniform_int_distribution<int>(1, 4)(rng);
        const int k = std::uniform_int_distribution<int>(1, 3)(rng);
        std::vector<int> sizes;
        std::vector<int> treated;
        for (int i = 0; i < b; ++i) {
            const int n = std::uniform_int_distribution<int>(4, 10)(rng);
            sizes.push_back(n);
            treated.push_back(std::uniform_int_distribution<int>(2, n - 2)(rng));
        }
        const auto pop = testing::random_population(seed, {sizes, treated, k});
        const auto data = observe(pop, sample_assignment(pop.design(), seed));
        double ols = 0.0;
        try {
            ols = estimate_ols(data).tau_hat;
        } catch (const Error& e) {
            // Too few units for K pooled slopes; draw another dataset.
            if (e.kind() != ErrorKind::RankDeficient) throw;
            ++skipped;
            continue;
        }
        worst = std::max(worst, std::abs(estimate_ols_design_matrix(data) - ols));
        ++done;
    }
    report("AC4", worst < 1e-8,
           "design-matrix vs two-regression ols on 50 datasets (B<=4, n<=10, K<=3; " + std::to_string(skipped) +
               " rank-deficient draws replaced), max |diff| " + fmt("%.2e", worst) + " (tol 1e-8)",
           seconds_since(t0));
}

std::vector<Population> randomized_populations() {
    std::vector<Population> out;
    std::mt19937_64 rng(5005);
    for (std::uint64_t s = 0; s < 20; ++s) {
        const int b = std::uniform_int_distribution<int>(1, 4)(rng);
        const int k = std::uniform_int_distribution<int>(1, 3)(rng);
        const bool equal_p = s % 2 == 0;
        std::vector<int> sizes;
        std::vector<int> treated;
        for (int i = 0; i < b; ++i) {
            const int n = 2 * std::uniform_int_distribution<int>(k + 2, 15)(rng);
            sizes.push_back(n);
            treated.push_back(equal_p ? n / 2 : std::uniform_int_distribution<int>(2, n - 2)(rng));
        }
        out.push_back(testing::random_population(5000 + s, {sizes, treated, k}));
    }
    return out;
}

void ac5() {
    const auto t0 = Clock::now();
    bool pass = true;
    double worst_order = -1e300;
    double worst_gap = 0.0;
    int equal = 0;
    for (const auto& pop : randomized_populations()) {
        const double n = pop.design().total_units();
        const auto pooled = ref_projection(pop, false);
        const auto strat = ref_projection(pop, true);
        const auto lib_pooled = population_projections(pop, ProjectionMode::pooled);
        const auto lib_strat = population_projections(pop, ProjectionMode::per_stratum);
        pass = pass && std::abs(lib_pooled.sigma2 - pooled.sigma2) * n <= 1e-10 &&
               std::abs(lib_strat.sigma2 - strat.sigma2) * n <= 1e-10;
        const double order = n * strat.sigma2 - n * pooled.sigma2;
        worst_order = std::max(worst_order, order);
        pass = pass && order <= 1e-10;

        const auto& props = pop.design().proportions();
        if (std::all_of(props.begin(), props.end(), [&](double p) { return p == props.front(); })) {
            ++equal;
            double delta = 0.0;
            for (int i = 0; i < pop.design().num_strata(); ++i) {
                const auto iu = static_cast<std::size_t>(i);
                const double p = props[iu];
                const Eigen::MatrixXd xc = centered(pop.stratum(i).x);
                const Eigen::MatrixXd sxx = xc.transpose() * xc / (xc.rows() - 1.0);
                const Eigen::VectorXd bt = (1 - p) * pooled.b1[iu] + p * pooled.b0[iu];
                delta += pop.design().weight(i) * bt.dot(sxx * bt) / (p * (1 - p));
            }
            const double lhs = n * ref_sigma2_unadj(pop) - n * pooled.sigma2;
            const double lib = variance_gaps(pop, lib_pooled, lib_strat).gap_unadj_ols;
            worst_gap = std::max({worst_gap, std::abs(lhs - delta), std::abs(lib - delta)});
            pass = pass && std::abs(lhs - delta) <= 1e-10 && std::abs(lib - delta) <= 1e-10;
        }
    }
    pass = pass && equal >= 5;
    report("AC5", pass,
           "20 populations: max N(s2_ols_int - s2_ols) " + fmt("%.2e", worst_order) + " (<= 1e-10); " +
               std::to_string(equal) + " equal-p gap identities, max error " + fmt("%.2e", worst_gap) + " (tol 1e-10)",
           seconds_since(t0));
}

void ac6() {
    const auto t0 = Clock::now();
    double worst_orth = 0.0;
    double worst_decomp = 0.0;
    for (const auto& pop : randomized_populations()) {
        for (auto mode : {ProjectionMode::pooled, ProjectionMode::per_stratum}) {
            const auto proj = population_projections(pop, mode);
            const int k = pop.num_covariates();
            Eigen::VectorXd orth1 = Eigen::VectorXd::Zero(k);
            Eigen::VectorXd orth0 = Eigen::VectorXd::Zero(k);
            for (int i = 0; i < pop.design().num_strata(); ++i) {
                const auto iu = static_cast<std::size_t>(i);
                const auto& s = pop.stratum(i);
                const Eigen::MatrixXd xc = centered(s.x);
                const double dn = xc.rows() - 1.0;
                const Eigen::MatrixXd sxx = xc.transpose() * xc / dn;
                const Eigen::VectorXd sxe1 = xc.transpose() * proj.resid1[iu] / dn;
                const Eigen::VectorXd sxe0 = xc.transpose() * proj.resid0[iu] / dn;
                const double c = pop.design().weight(i);
                orth1 += c * sxe1;
                orth0 += c * sxe0;
                if (mode == ProjectionMode::per_stratum) {
                    worst_orth = std::max({worst_orth, sxe1.cwiseAbs().maxCoeff(), sxe0.cwiseAbs().maxCoeff()});
                }
                const auto& b1 = proj.beta1[iu];
                const double rhs = b1.dot(sxx * b1) + testing::naive_var(proj.resid1[iu]) + 2.0 * b1.dot(sxe1);
                worst_decomp = std::max(worst_decomp, std::abs(testing::naive_var(s.y1) - rhs));
            }
            worst_orth = std::max({worst_orth, orth1.cwiseAbs().maxCoeff(), orth0.cwiseAbs().maxCoeff()});
        }
    }
    report("AC6", worst_orth <= 1e-10 && worst_decomp <= 1e-10,
           "orthogonality max " + fmt("%.2e", worst_orth) + ", S2_y(1) decomposition max error " +
               fmt("%.2e", worst_decomp) + " (tol 1e-10)",
           seconds_since(t0));
}

void ac7() {
    const auto t0 = Clock::now();
    ScenarioConfig c;
    c.scenario = Scenario::custom;
    c.stratum_sizes.assign(50, 20);
    c.coefficient_groups.assign(50, 0);
    c.K = 3;
    c.reps = 10000;
    c.boot_reps = 0;
    c.methods = {Method::unadj};
    auto z = standardized_estimates(c, Method::unadj);
    std::sort(z.begin(), z.end());
    const double n = static_cast<double>(z.size());
    double ks = 0.0;
    double mean = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double f = 0.5 * std::erfc(-z[i] / std::sqrt(2.0));
        ks = std::max({ks, (i + 1.0) / n - f, f - i / n});
        mean += z[i];
    }
    mean /= n;
    double var = 0.0;
    for (double v : z) var += (v - mean) * (v - mean);
    var /= n - 1;
    const double crit = 1.6276 / std::sqrt(n);
    const double secs = seconds_since(t0);
    const bool pass = ks < crit && std::abs(mean) <= 4.0 / std::sqrt(n) && std::abs(var - 1.0) <= 0.05 && secs < 60.0;
    report("AC7", pass,
           "B=50 n=20 p=1/2 10^4 reps: KS " + fmt("%.4f", ks) + " (< " + fmt("%.4f", crit) + "), mean " +
               fmt("%.4f", mean) + " (|.| <= 0.04), variance " + fmt("%.4f", var) + " (within 5% of 1, runtime < 60 s)",
           secs);
}

void ac8() {
    const auto t0 = Clock::now();
    bool pass = true;
    std::string detail;
    for (double rho : {0.0, 0.5}) {
        ScenarioConfig c;
        c.rho = rho;
        c.B = 25;
        c.reps = 2000;
        const auto t = run_monte_carlo(c);
        const auto* u = t.row(Method::unadj);
        const auto* o = t.row(Method::ols);
        const double ratio = o->sd / u->sd;
        pass = pass && ratio > 0.45 && ratio < 0.85 && u->coverage >= 0.95 && o->coverage >= 0.95 &&
               o->ci_length < u->ci_length;
        detail += fmt("rho=%.1f", rho) + fmt(": sd ratio %.3f", ratio) + fmt(", CP %.3f", u->coverage) +
                  fmt("/%.3f", o->coverage) + fmt(", CI length %.3f", u->ci_length) + fmt("/%.3f; ", o->ci_length);
    }
    const double secs = seconds_since(t0);
    pass = pass && secs < 180.0;
    report("AC8", pass, "Scenario 1 " + detail + "(ratio in (0.45,0.85), CP >= 0.95, runtime < 180 s)", secs);
}

void ac9() {
    const auto t0 = Clock::now();
    ScenarioConfig c;
    c.scenario = Scenario::s3;
    c.size = 200;
    c.reps = 2000;
    const auto t = run_monte_carlo(c);
    const auto* u = t.row(Method::unadj);
    const auto* o = t.row(Method::ols);
    const auto* i = t.row(Method::ols_int);
    const auto margin_ok = [&](const MetricsRow* lo, const MetricsRow* hi) {
        const double bound = 2.0 * std::max({lo->se(Metric::sd), hi->se(Metric::sd),
                                             t.paired_difference_se(Metric::sd, hi->method, lo->method)});
        return hi->sd - lo->sd > bound;
    };
    bool pass = margin_ok(i, o) && margin_ok(o, u);
    for (const auto& r : t.rows) pass = pass && r.coverage >= 0.95;
    const double secs = seconds_since(t0);
    pass = pass && secs < 180.0;
    report("AC9",
           pass,
           "Scenario 3 n=200: sd x100 " + fmt("%.2f", 100 * i->sd) + fmt(" (%.2f)", 100 * i->se(Metric::sd)) + " < " +
               fmt("%.2f", 100 * o->sd) + fmt(" (%.2f)", 100 * o->se(Metric::sd)) + " < " + fmt("%.2f", 100 * u->sd) +
               fmt(" (%.2f)", 100 * u->se(Metric::sd)) + ", CP " + fmt("%.3f", u->coverage) + fmt("/%.3f", o->coverage) +
               fmt("/%.3f", i->coverage) + " (margins > 2 bootstrap SE, CP >= 0.95, runtime < 180 s)",
           secs);
}

void ac10() {
    const auto t0 = Clock::now();
    ScenarioConfig c;
    c.scenario = Scenario::s4;
    c.B = 25;
    c.reps = 2000;
    const auto t = run_monte_carlo(c);
    const auto* o = t.row(Method::ols);
    const auto* i = t.row(Method::ols_int);
    const bool pass = i->coverage < o->coverage && i->rmse > o->rmse;
    report("AC10", pass,
           "Scenario 4 B=25: CP ols_int " + fmt("%.3f", i->coverage) + " < ols " + fmt("%.3f", o->coverage) +
               ", rmse x100 ols_int " + fmt("%.2f", 100 * i->rmse) + " > ols " + fmt("%.2f", 100 * o->rmse),
           seconds_since(t0));
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

void ac11() {
    const auto t0 = Clock::now();
    std::vector<double> med;
    for (int b : {20, 200}) {
        ScenarioConfig c;
        c.B = b;
        c.reps = 200;
        c.boot_reps = 0;
        c.methods = {Method::ols};
        med.push_back(median(pooled_slope_errors(c)));
    }
    report("AC11", med[1] <= 0.5 * med[0],
           "Scenario 1 family, median ||beta1_hat - beta1|| N=200 " + fmt("%.4f", med[0]) + ", N=2000 " +
               fmt("%.4f", med[1]) + fmt(" (ratio %.3f <= 0.5)", med[1] / med[0]),
           seconds_since(t0));
}

std::string cli_output(std::vector<std::string> args) {
    std::ostringstream out;
    std::ostringstream err;
    const int code = run_cli(args, out, err);
    return std::to_string(code) + "\n" + out.str() + err.str();
}

void ac12() {
    const auto t0 = Clock::now();
    bool pass = true;
    const std::vector<std::vector<std::string>> commands{
        {"simulate", "--scenario", "4", "--B", "25", "--reps", "300", "--boot-reps", "100", "--seed", "12"},
        {"simulate", "--scenario", "3", "--size", "50", "--reps", "300", "--seed", "12", "--format", "json"},
        {"oracle-check"},
        {"oracle-check", "--format", "json"},
    };
    for (const auto& cmd : commands) {
        auto one = cmd;
        one.insert(one.end(), {"--workers", "1"});
        auto eight = cmd;
        eight.insert(eight.end(), {"--workers", "8"});
        const auto a = cli_output(one);
        pass = pass && a.rfind("0\n", 0) == 0 && cli_output(one) == a && cli_output(eight) == a;
    }
    report("AC12", pass, "simulate and oracle-check output byte-identical across runs and --workers 1 vs 8",
           seconds_since(t0));
}

}  // namespace

int main() {
    const std::vector<std::function<void()>> criteria{ac1, ac2, ac3, ac4, ac5, ac6, ac7, ac8, ac9, ac10, ac11, ac12};
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        try {
            criteria[i]();
        } catch (const std::exception& e) {
            report("AC" + std::to_string(i + 1), false, std::string("threw: ") + e.what(), 0.0);
        }
    }
    std::printf("acceptance: %zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failures), criteria.size());
    return failures == 0 ? 0 : 1;
}
