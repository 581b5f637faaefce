#include "stratadj/simulation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "stratadj/error.hpp"
#include "stratadj/numeric.hpp"
#include "stratadj/oracle.hpp"
#include "stratadj/parallel.hpp"
#include "stratadj/randomization.hpp"

namespace stratadj {

namespace {

// Stream tags under the master seed.
constexpr std::uint64_t kPopulationStream = 0x504f50;    // "POP"
constexpr std::uint64_t kReplicationStream = 0x524550;   // "REP"
constexpr std::uint64_t kBootstrapStream = 0x424f4f54;   // "BOOT"

// Stream tags under the population seed.
constexpr std::uint64_t kCovariateStream = 0;
constexpr std::uint64_t kNoiseStream = 1;
constexpr std::uint64_t kCoefficientStreamBase = 1000;

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorKind::InvalidInput, "config: " + what); }

}  // namespace

std::uint64_t population_seed(std::uint64_t master_seed) { return derive_seed(master_seed, kPopulationStream); }

ScenarioConfig resolve_config(ScenarioConfig c) {
    switch (c.scenario) {
        case Scenario::s1:
            if (c.B < 1) invalid("B must be >= 1");
            c.stratum_sizes.assign(static_cast<std::size_t>(c.B), 10);
            c.coefficient_groups.assign(static_cast<std::size_t>(c.B), 0);
            c.K = 10;
            break;
        case Scenario::s2:
        case Scenario::s3:
            c.stratum_sizes = {c.size, c.size};
            c.coefficient_groups = c.scenario == Scenario::s2 ? std::vector<int>{0, 0} : std::vector<int>{0, 1};
            c.K = 10;
            break;
        case Scenario::s4:
            if (c.B < 1) invalid("B must be >= 1");
            c.stratum_sizes = {100, 100};
            c.stratum_sizes.insert(c.stratum_sizes.end(), static_cast<std::size_t>(c.B), 10);
            c.coefficient_groups = {1, 2};
            c.coefficient_groups.insert(c.coefficient_groups.end(), static_cast<std::size_t>(c.B), 0);
            c.K = 3;
            break;
        case Scenario::custom:
            if (c.stratum_sizes.empty()) invalid("custom scenario needs stratum_sizes");
            if (c.coefficient_groups.empty()) c.coefficient_groups.assign(c.stratum_sizes.size(), 0);
            if (c.coefficient_groups.size() != c.stratum_sizes.size()) {
                invalid("coefficient_groups must match stratum_sizes in length");
            }
            c.B = static_cast<int>(c.stratum_sizes.size());
            break;
    }
    for (int n : c.stratum_sizes) {
        if (n < 4) invalid("every stratum needs at least 4 units (>= 2 per arm)");
    }
    for (int g : c.coefficient_groups) {
        if (g < 0) invalid("coefficient group ids must be >= 0");
    }
    if (c.K < 1) invalid("K must be >= 1");
    if (!(c.rho >= 0.0 && c.rho < 1.0)) invalid("rho must lie in [0,1)");
    if (c.reps < 2) invalid("reps must be >= 2");
    if (!(c.alpha > 0.0 && c.alpha < 1.0)) invalid("alpha must lie in (0,1)");
    if (c.boot_reps < 0) invalid("boot_reps must be >= 0");
    if (c.methods.empty()) invalid("at least one method is required");
    if (!(c.snr > 0.0)) invalid("snr must be positive");
    if (c.noise_variance && !(*c.noise_variance >= 0.0)) invalid("noise_variance must be >= 0");
    if (c.workers < 1) invalid("workers must be >= 1");
    std::set<Method> seen;
    for (Method m : c.methods) {
        if (!seen.insert(m).second) invalid("duplicate method " + std::string(to_string(m)));
    }
    return c;
}

nlohmann::json config_to_json(const ScenarioConfig& c) {
    nlohmann::json j;
    j["scenario"] = c.scenario == Scenario::custom ? nlohmann::json("custom") : nlohmann::json(static_cast<int>(c.scenario));
    j["rho"] = c.rho;
    j["B"] = c.B;
    j["size"] = c.size;
    j["stratum_sizes"] = c.stratum_sizes;
    j["coefficient_groups"] = c.coefficient_groups;
    j["K"] = c.K;
    j["reps"] = c.reps;
    j["alpha"] = c.alpha;
    j["seed"] = c.master_seed;
    j["boot_reps"] = c.boot_reps;
    auto& methods = j["methods"] = nlohmann::json::array();
    for (Method m : c.methods) methods.push_back(std::string(to_string(m)));
    j["df_divisor"] = std::string(to_string(c.df_divisor));
    j["snr"] = c.snr;
    j["noise_variance"] = c.noise_variance ? nlohmann::json(*c.noise_variance) : nlohmann::json(nullptr);
    return j;
}

ScenarioConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) invalid("document must be a JSON object");
    static const std::set<std::string> known{"scenario", "rho",   "B",       "size",    "stratum_sizes",
                                             "coefficient_groups", "K",     "reps",    "alpha",
                                             "seed",    "boot_reps", "methods", "df_divisor",
                                             "snr",     "noise_variance", "workers"};
    for (const auto& [key, _] : j.items()) {
        if (!known.contains(key)) invalid("unknown key '" + key + "'");
    }
    ScenarioConfig c;
    try {
        if (j.contains("scenario")) {
            const auto& s = j.at("scenario");
            if (s.is_string()) {
                if (s.get<std::string>() != "custom") invalid("scenario must be 1-4 or \"custom\"");
                c.scenario = Scenario::custom;
            } else {
                const int v = s.get<int>();
                if (v < 1 || v > 4) invalid("scenario must be 1-4 or \"custom\"");
                c.scenario = static_cast<Scenario>(v);
            }
        }
        if (j.contains("rho")) c.rho = j.at("rho").get<double>();
        if (j.contains("B")) c.B = j.at("B").get<int>();
        if (j.contains("size")) c.size = j.at("size").get<int>();
        if (j.contains("stratum_sizes")) c.stratum_sizes = j.at("stratum_sizes").get<std::vector<int>>();
        if (j.contains("coefficient_groups")) {
            c.coefficient_groups = j.at("coefficient_groups").get<std::vector<int>>();
        }
        if (j.contains("K")) c.K = j.at("K").get<int>();
        if (j.contains("reps")) c.reps = j.at("reps").get<int>();
        if (j.contains("alpha")) c.alpha = j.at("alpha").get<double>();
        if (j.contains("seed")) c.master_seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("boot_reps")) c.boot_reps = j.at("boot_reps").get<int>();
        if (j.contains("methods")) {
            c.methods.clear();
            for (const auto& m : j.at("methods")) c.methods.push_back(parse_method(m.get<std::string>()));
        }
        if (j.contains("df_divisor")) c.df_divisor = parse_df_divisor(j.at("df_divisor").get<std::string>());
        if (j.contains("snr")) c.snr = j.at("snr").get<double>();
        if (j.contains("noise_variance") && !j.at("noise_variance").is_null()) {
            c.noise_variance = j.at("noise_variance").get<double>();
        }
        if (j.contains("workers")) c.workers = j.at("workers").get<int>();
    } catch (const nlohmann::json::exception& e) {
        invalid(e.what());
    }
    return c;
}

Population generate_population(const ScenarioConfig& config, std::uint64_t seed) {
    const int k = config.K;
    const auto b = config.stratum_sizes.size();
    Eigen::MatrixXd sigma(k, k);
    for (int r = 0; r < k; ++r) {
        for (int c = 0; c < k; ++c) sigma(r, c) = std::pow(config.rho, std::abs(r - c));
    }
    const Eigen::MatrixXd chol = sigma.llt().matrixL();

    std::normal_distribution<double> normal(0.0, 1.0);
    Rng x_rng(derive_seed(seed, kCovariateStream));
    std::vector<Eigen::MatrixXd> xs;
    for (std::size_t i = 0; i < b; ++i) {
        const int n = config.stratum_sizes[i];
        Eigen::MatrixXd z(n, k);
        for (int j = 0; j < n; ++j) {
            for (int c = 0; c < k; ++c) z(j, c) = normal(x_rng);
        }
        xs.push_back(z * chol.transpose());
    }

    // beta11 ~ t3, beta12 ~ 0.1 t3, beta01 ~ beta11 + t3, beta02 ~ beta12 + 0.1 t3.
    struct Coefficients {
        Eigen::VectorXd b11, b12, b01, b02;
    };
    std::map<int, Coefficients> groups;
    for (int g : config.coefficient_groups) {
        if (groups.contains(g)) continue;
        Rng rng(derive_seed(seed, kCoefficientStreamBase + static_cast<std::uint64_t>(g)));
        std::normal_distribution<double> nd(0.0, 1.0);
        std::chi_squared_distribution<double> chi(3.0);
        auto t3 = [&] { return nd(rng) / std::sqrt(chi(rng) / 3.0); };
        Coefficients co{Eigen::VectorXd(k), Eigen::VectorXd(k), Eigen::VectorXd(k), Eigen::VectorXd(k)};
        for (int c = 0; c < k; ++c) co.b11[c] = t3();
        for (int c = 0; c < k; ++c) co.b12[c] = 0.1 * t3();
        for (int c = 0; c < k; ++c) co.b01[c] = co.b11[c] + t3();
        for (int c = 0; c < k; ++c) co.b02[c] = co.b12[c] + 0.1 * t3();
        groups.emplace(g, std::move(co));
    }

    std::vector<Eigen::VectorXd> m1(b), m0(b);
    std::vector<double> all_m1;
    std::vector<double> all_m0;
    for (std::size_t i = 0; i < b; ++i) {
        const auto& co = groups.at(config.coefficient_groups[i]);
        m1[i] = xs[i] * co.b11 + (xs[i] * co.b12).array().exp().matrix();
        m0[i] = xs[i] * co.b01 + (xs[i] * co.b02).array().exp().matrix();
        all_m1.insert(all_m1.end(), m1[i].data(), m1[i].data() + m1[i].size());
        all_m0.insert(all_m0.end(), m0[i].data(), m0[i].data() + m0[i].size());
    }
    const double noise_var = config.noise_variance
                                 ? *config.noise_variance
                                 : 0.5 * (sample_variance(all_m1) + sample_variance(all_m0)) / config.snr;
    const double noise_sd = std::sqrt(noise_var);

    Rng e_rng(derive_seed(seed, kNoiseStream));
    std::vector<StratumPotentials> strata;
    std::vector<int> treated;
    for (std::size_t i = 0; i < b; ++i) {
        const int n = config.stratum_sizes[i];
        StratumPotentials s{Eigen::VectorXd(n), Eigen::VectorXd(n), std::move(xs[i])};
        for (int j = 0; j < n; ++j) s.y1[j] = m1[i][j] + noise_sd * normal(e_rng);
        for (int j = 0; j < n; ++j) s.y0[j] = m0[i][j] + noise_sd * normal(e_rng);
        strata.push_back(std::move(s));
        treated.push_back(n / 2);
    }
    return Population(ExperimentDesign::from_counts(config.stratum_sizes, treated), std::move(strata));
}

double MetricsRow::value(Metric m) const {
    switch (m) {
        case Metric::bias: return bias;
        case Metric::sd: return sd;
        case Metric::rmse: return rmse;
        case Metric::coverage: return coverage;
        case Metric::ci_length: return ci_length;
    }
    return 0.0;
}

const MetricsRow* MetricsTable::row(Method m) const {
    for (const auto& r : rows) {
        if (r.method == m) return &r;
    }
    return nullptr;
}

double MetricsTable::paired_difference_se(Metric metric, Method a, Method b) const {
    std::size_t ia = rows.size();
    std::size_t ib = rows.size();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].method == a) ia = i;
        if (rows[i].method == b) ib = i;
    }
    if (ia == rows.size() || ib == rows.size()) {
        throw Error(ErrorKind::InvalidInput, "paired_difference_se: method not in table");
    }
    const auto& va = boot_values[ia][static_cast<std::size_t>(metric)];
    const auto& vb = boot_values[ib][static_cast<std::size_t>(metric)];
    if (va.size() < 2) return 0.0;
    std::vector<double> diff(va.size());
    for (std::size_t t = 0; t < va.size(); ++t) diff[t] = va[t] - vb[t];
    return std::sqrt(sample_variance(diff));
}

MetricsRow compute_metrics(Method method, const std::vector<ReplicationRecord>& records, double tau) {
    MetricsRow row;
    row.method = method;
    std::vector<double> est;
    est.reserve(records.size());
    CompensatedSum sq_err;
    CompensatedSum length;
    int covered = 0;
    for (const auto& r : records) {
        if (!r.ok) {
            ++row.failures;
            continue;
        }
        est.push_back(r.tau_hat);
        sq_err.add((r.tau_hat - tau) * (r.tau_hat - tau));
        length.add(r.hi - r.lo);
        if (r.lo <= tau && tau <= r.hi) ++covered;
    }
    row.reps_used = static_cast<int>(est.size());
    if (est.empty()) return row;
    const double n = static_cast<double>(est.size());
    row.bias = compensated_mean(est) - tau;
    row.sd = est.size() > 1 ? std::sqrt(sample_variance(est)) : 0.0;
    row.rmse = std::sqrt(sq_err.value() / n);
    row.coverage = covered / n;
    row.ci_length = length.value() / n;
    return row;
}

namespace {

struct StudySetup {
    ScenarioConfig config;
    Population population;
};

StudySetup setup(const ScenarioConfig& config) {
    ScenarioConfig resolved = resolve_config(config);
    Population pop = generate_population(resolved, population_seed(resolved.master_seed));
    return {std::move(resolved), std::move(pop)};
}

Assignment replication_assignment(const StudySetup& s, std::size_t rep) {
    const std::uint64_t stream = derive_seed(s.config.master_seed, kReplicationStream);
    return sample_assignment(s.population.design(), derive_seed(stream, rep));
}

std::optional<double> oracle_sigma(const Population& pop, Method m) {
    try {
        switch (m) {
            case Method::unadj: return std::sqrt(population_moments(pop).sigma2_unadj);
            case Method::ols: return std::sqrt(population_projections(pop, ProjectionMode::pooled).sigma2);
            case Method::ols_int:
                return std::sqrt(population_projections(pop, ProjectionMode::per_stratum).sigma2);
        }
    } catch (const Error&) {
    }
    return std::nullopt;
}

}  // namespace

MetricsTable run_monte_carlo(const ScenarioConfig& config) {
    const StudySetup s = setup(config);
    const auto& design = s.population.design();
    MetricsTable table;
    table.config = s.config;
    table.N = design.total_units();
    table.tau = population_moments(s.population).tau;
    table.sigma_unadj = oracle_sigma(s.population, Method::unadj);
    table.sigma_ols = oracle_sigma(s.population, Method::ols);
    table.sigma_ols_int = oracle_sigma(s.population, Method::ols_int);

    std::vector<Method> active;
    for (Method m : s.config.methods) {
        try {
            check_applicable(m, design, s.population.num_covariates());
            active.push_back(m);
        } catch (const Error& e) {
            table.excluded.emplace_back(m, e.what());
        }
    }
    if (active.empty()) {
        std::string reasons;
        for (const auto& [m, why] : table.excluded) reasons += std::string(to_string(m)) + ": " + why + "; ";
        throw Error(ErrorKind::MethodInapplicable, "no requested method is applicable (" + reasons + ")");
    }

    const auto reps = static_cast<std::size_t>(s.config.reps);
    table.records.assign(active.size(), std::vector<ReplicationRecord>(reps));
    parallel_blocks(reps, s.config.workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t r = begin; r < end; ++r) {
            const ObservedDataset obs = observe(s.population, replication_assignment(s, r));
            for (std::size_t m = 0; m < active.size(); ++m) {
                auto& rec = table.records[m][r];
                try {
                    const auto rep = estimate(active[m], obs, s.config.alpha, s.config.df_divisor);
                    rec.tau_hat = rep.tau_hat;
                    if (rep.ci) {
                        rec.lo = rep.ci->first;
                        rec.hi = rep.ci->second;
                        rec.ok = true;
                    }
                } catch (const Error&) {
                    rec.ok = false;
                }
            }
        }
    });

    for (std::size_t m = 0; m < active.size(); ++m) {
        table.rows.push_back(compute_metrics(active[m], table.records[m], table.tau));
    }

    const auto boots = static_cast<std::size_t>(s.config.boot_reps);
    table.boot_values.assign(active.size(), {});
    for (auto& per_method : table.boot_values) {
        for (auto& v : per_method) v.assign(boots, 0.0);
    }
    const std::uint64_t boot_stream = derive_seed(s.config.master_seed, kBootstrapStream);
    parallel_blocks(boots, s.config.workers, [&](std::size_t begin, std::size_t end) {
        std::vector<ReplicationRecord> resample(reps);
        for (std::size_t b = begin; b < end; ++b) {
            Rng rng(derive_seed(boot_stream, b));
            std::uniform_int_distribution<std::size_t> pick(0, reps - 1);
            std::vector<std::size_t> idx(reps);
            for (auto& v : idx) v = pick(rng);
            for (std::size_t m = 0; m < active.size(); ++m) {
                for (std::size_t t = 0; t < reps; ++t) resample[t] = table.records[m][idx[t]];
                const MetricsRow row = compute_metrics(active[m], resample, table.tau);
                for (std::size_t q = 0; q < kNumMetrics; ++q) {
                    table.boot_values[m][q][b] = row.value(static_cast<Metric>(q));
                }
            }
        }
    });
    for (std::size_t m = 0; m < active.size(); ++m) {
        for (std::size_t q = 0; q < kNumMetrics; ++q) {
            const auto& v = table.boot_values[m][q];
            table.rows[m].boot_se[q] = v.size() > 1 ? std::sqrt(sample_variance(v)) : 0.0;
        }
    }
    return table;
}

std::vector<double> standardized_estimates(const ScenarioConfig& config, Method method) {
    const StudySetup s = setup(config);
    check_applicable(method, s.population.design(), s.population.num_covariates());
    const double tau = population_moments(s.population).tau;
    const auto sigma = oracle_sigma(s.population, method);
    if (!sigma || !(*sigma > 0.0)) {
        throw Error(ErrorKind::DegenerateVariance,
                    "population SD of " + std::string(to_string(method)) + " is not computable");
    }
    std::vector<double> out(static_cast<std::size_t>(s.config.reps));
    parallel_blocks(out.size(), s.config.workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t r = begin; r < end; ++r) {
            const ObservedDataset obs = observe(s.population, replication_assignment(s, r));
            out[r] = (estimate(method, obs, s.config.alpha, s.config.df_divisor).tau_hat - tau) / *sigma;
        }
    });
    return out;
}

std::vector<double> pooled_slope_errors(const ScenarioConfig& config) {
    const StudySetup s = setup(config);
    const Eigen::VectorXd beta1 = population_projections(s.population, ProjectionMode::pooled).beta1.front();
    std::vector<double> out(static_cast<std::size_t>(s.config.reps));
    parallel_blocks(out.size(), s.config.workers, [&](std::size_t begin, std::size_t end) {
        for (std::size_t r = begin; r < end; ++r) {
            const ObservedDataset obs = observe(s.population, replication_assignment(s, r));
            out[r] = (fit_pooled_wls(obs, Arm::treated) - beta1).norm();
        }
    });
    return out;
}

double round_sig6(double v) {
    if (!std::isfinite(v) || v == 0.0) return v;
    char buf[32];
    const int len = std::snprintf(buf, sizeof buf, "%.6g", v);
    double out = v;
    std::from_chars(buf, buf + len, out);
    return out;
}

namespace {

nlohmann::json optional_number(const std::optional<double>& v) {
    return v ? nlohmann::json(round_sig6(*v)) : nlohmann::json(nullptr);
}

constexpr const char* kMetricNames[kNumMetrics] = {"bias", "sd", "rmse", "coverage", "ci_length"};

}  // namespace

nlohmann::json metrics_to_json(const MetricsTable& t) {
    nlohmann::json j;
    j["config"] = config_to_json(t.config);
    j["population"] = {{"N", t.N},
                       {"B", t.config.B},
                       {"K", t.config.K},
                       {"tau", round_sig6(t.tau)},
                       {"sigma_unadj", optional_number(t.sigma_unadj)},
                       {"sigma_ols", optional_number(t.sigma_ols)},
                       {"sigma_ols_int", optional_number(t.sigma_ols_int)}};
    auto& rows = j["methods"] = nlohmann::json::array();
    for (const auto& r : t.rows) {
        nlohmann::json row;
        row["method"] = std::string(to_string(r.method));
        nlohmann::json se;
        for (std::size_t q = 0; q < kNumMetrics; ++q) {
            row[kMetricNames[q]] = round_sig6(r.value(static_cast<Metric>(q)));
            se[kMetricNames[q]] = round_sig6(r.boot_se[q]);
        }
        row["boot_se"] = se;
        row["reps_used"] = r.reps_used;
        row["failures"] = r.failures;
        rows.push_back(row);
    }
    auto& ex = j["excluded"] = nlohmann::json::array();
    for (const auto& [m, why] : t.excluded) ex.push_back({{"method", std::string(to_string(m))}, {"reason", why}});
    return j;
}

namespace {

std::string scaled(double v, double se, double scale) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.0f(%.0f)", v * scale, se * scale);
    return buf;
}

std::string pad(const std::string& s, std::size_t width) {
    // Width counts code points so the UTF-8 '≤' in reasons does not skew columns.
    std::size_t cps = 0;
    for (unsigned char ch : s) cps += (ch & 0xC0) != 0x80;
    return cps >= width ? s : std::string(width - cps, ' ') + s;
}

}  // namespace

std::string format_metrics_table(const MetricsTable& t) {
    std::ostringstream out;
    const auto& c = t.config;
    char head[256];
    std::snprintf(head, sizeof head, "scenario %s  rho %g  B %d  N %d  K %d  reps %d  boot %d  seed %llu\n",
                  c.scenario == Scenario::custom ? "custom" : std::to_string(static_cast<int>(c.scenario)).c_str(),
                  c.rho, c.B, t.N, c.K, c.reps, c.boot_reps, static_cast<unsigned long long>(c.master_seed));
    out << head;
    char tau[64];
    std::snprintf(tau, sizeof tau, "tau %.6g\n", t.tau);
    out << tau;
    out << std::string(8, ' ') << pad("method", 8) << pad("Bias(x1000)", 14) << pad("SD(x100)", 12)
        << pad("sqrtMSE(x100)", 15) << pad("CP(%)", 8) << pad("CI length(x100)", 17) << '\n';
    for (Method m : c.methods) {
        out << std::string(8, ' ') << pad(std::string(to_string(m)), 8);
        if (const auto* r = t.row(m)) {
            char cp[32];
            char len[32];
            std::snprintf(cp, sizeof cp, "%.1f", 100.0 * r->coverage);
            std::snprintf(len, sizeof len, "%.0f", 100.0 * r->ci_length);
            out << pad(scaled(std::abs(r->bias), r->se(Metric::bias), 1000.0), 14)
                << pad(scaled(r->sd, r->se(Metric::sd), 100.0), 12)
                << pad(scaled(r->rmse, r->se(Metric::rmse), 100.0), 15) << pad(cp, 8) << pad(len, 17);
            if (r->failures > 0) out << "  (" << r->failures << " failed reps)";
        } else {
            std::string reason = "n/a";
            for (const auto& [em, why] : t.excluded) {
                if (em == m) reason = "n/a (" + why + ")";
            }
            out << "  " << reason;
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace stratadj
