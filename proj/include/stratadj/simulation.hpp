#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "stratadj/core.hpp"
#include "stratadj/estimators.hpp"

namespace stratadj {

/// Scenario presets:
///   1  B small strata of 10, K = 10, one shared coefficient draw
///   2  two strata of `size`, K = 10, shared coefficients
///   3  two strata of `size`, K = 10, independent coefficients per stratum
///   4  two strata of 100 with their own coefficients plus B strata of 10
///      sharing one draw, K = 3
///   custom  explicit stratum_sizes / coefficient_groups / K
enum class Scenario { s1 = 1, s2 = 2, s3 = 3, s4 = 4, custom = 0 };

struct ScenarioConfig {
    Scenario scenario = Scenario::s1;
    double rho = 0.0;
    int B = 25;       // number of small strata (scenarios 1 and 4)
    int size = 100;   // large-stratum size (scenarios 2 and 3)
    std::vector<int> stratum_sizes;
    /// Strata with the same group id share one coefficient draw.
    std::vector<int> coefficient_groups;
    int K = 10;
    int reps = 2000;
    double alpha = 0.05;
    std::uint64_t master_seed = 20190101;
    int boot_reps = 500;
    std::vector<Method> methods{Method::unadj, Method::ols, Method::ols_int};
    DfDivisor df_divisor = DfDivisor::arm;
    /// Noise variance is (mean signal variance) / snr.
    double snr = 1.0;
    /// Overrides the snr rule when set.
    std::optional<double> noise_variance;
    /// Scheduling only; never affects results.
    int workers = 1;
};

/// Fills stratum sizes, K, and coefficient groups from the preset and checks
/// every field. Throws InvalidInput.
ScenarioConfig resolve_config(ScenarioConfig config);

nlohmann::json config_to_json(const ScenarioConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
ScenarioConfig config_from_json(const nlohmann::json& j);

/// Draws covariates, coefficients, and noise once; the result is the fixed
/// population of a study. `config` must be resolved.
Population generate_population(const ScenarioConfig& config, std::uint64_t seed);

/// Seed used for the population of a study with this master seed.
std::uint64_t population_seed(std::uint64_t master_seed);

enum class Metric { bias, sd, rmse, coverage, ci_length };
constexpr std::size_t kNumMetrics = 5;

struct MetricsRow {
    Method method = Method::unadj;
    double bias = 0.0;
    double sd = 0.0;
    double rmse = 0.0;
    double coverage = 0.0;
    double ci_length = 0.0;
    std::array<double, kNumMetrics> boot_se{};
    int reps_used = 0;
    int failures = 0;

    double value(Metric m) const;
    double se(Metric m) const { return boot_se[static_cast<std::size_t>(m)]; }
};

/// Per-replication outcome of one method. Failed fits are flagged.
struct ReplicationRecord {
    double tau_hat = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    bool ok = false;
};

struct MetricsTable {
    ScenarioConfig config;  // resolved
    double tau = 0.0;
    int N = 0;
    /// Population SDs of the three estimators where computable.
    std::optional<double> sigma_unadj;
    std::optional<double> sigma_ols;
    std::optional<double> sigma_ols_int;
    std::vector<MetricsRow> rows;
    std::vector<std::pair<Method, std::string>> excluded;

    /// Per method in `rows` order: records by replication index.
    std::vector<std::vector<ReplicationRecord>> records;
    /// Per method: boot_values[m][metric][b].
    std::vector<std::array<std::vector<double>, kNumMetrics>> boot_values;

    const MetricsRow* row(Method m) const;
    /// Bootstrap SE of metric(a) - metric(b) under shared resamples.
    double paired_difference_se(Metric metric, Method a, Method b) const;
};

/// Operating characteristics computed from replication records against tau.
MetricsRow compute_metrics(Method method, const std::vector<ReplicationRecord>& records, double tau);

MetricsTable run_monte_carlo(const ScenarioConfig& config);

/// (tau_hat - tau) / sigma for every replication, with sigma the population SD
/// of the estimator.
std::vector<double> standardized_estimates(const ScenarioConfig& config, Method method);

/// ||beta1_hat - beta1|| per replication, beta1 the pooled population projection.
std::vector<double> pooled_slope_errors(const ScenarioConfig& config);

nlohmann::json metrics_to_json(const MetricsTable& table);

/// Aligned text table: Bias x1000, SD x100, sqrt(MSE) x100, CP %, CI length x100.
std::string format_metrics_table(const MetricsTable& table);

/// Rounds to six significant digits for stable JSON output.
double round_sig6(double v);

}  // namespace stratadj
