#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace stratadj {

enum class Arm : int { control = 0, treated = 1 };

constexpr int arm_index(Arm a) noexcept { return static_cast<int>(a); }

struct StratumDesign {
    int id = 0;  // 1-based
    int n = 0;
    int n1 = 0;

    int n0() const noexcept { return n - n1; }
    int count(Arm a) const noexcept { return a == Arm::treated ? n1 : n0(); }
};

/// Stratum sizes and treated counts. Immutable once built; the constructor
/// enforces n >= 2 and 1 <= n1 <= n - 1 in every stratum.
class ExperimentDesign {
public:
    ExperimentDesign() = default;
    explicit ExperimentDesign(std::vector<StratumDesign> strata);

    /// Builds strata with ids 1..B from parallel size / treated-count lists.
    static ExperimentDesign from_counts(const std::vector<int>& sizes,
                                        const std::vector<int>& treated);

    int num_strata() const noexcept { return static_cast<int>(strata_.size()); }
    int total_units() const noexcept { return total_; }
    const std::vector<StratumDesign>& strata() const noexcept { return strata_; }
    const StratumDesign& stratum(int i) const { return strata_.at(static_cast<std::size_t>(i)); }

    /// Stratum weight n_i / N.
    double weight(int i) const { return weights_.at(static_cast<std::size_t>(i)); }
    /// Treated proportion n1_i / n_i.
    double proportion(int i) const { return proportions_.at(static_cast<std::size_t>(i)); }

    const std::vector<double>& weights() const noexcept { return weights_; }
    const std::vector<double>& proportions() const noexcept { return proportions_; }

    bool operator==(const ExperimentDesign& other) const;

private:
    std::vector<StratumDesign> strata_;
    std::vector<double> weights_;
    std::vector<double> proportions_;
    int total_ = 0;
};

/// Potential outcomes and covariates of one stratum. Rows of `x` are units.
struct StratumPotentials {
    Eigen::VectorXd y1;
    Eigen::VectorXd y0;
    Eigen::MatrixXd x;
};

/// Complete potential-outcome table; fixed, non-random.
class Population {
public:
    Population(ExperimentDesign design, std::vector<StratumPotentials> strata);

    const ExperimentDesign& design() const noexcept { return design_; }
    const std::vector<StratumPotentials>& strata() const noexcept { return strata_; }
    const StratumPotentials& stratum(int i) const { return strata_.at(static_cast<std::size_t>(i)); }
    int num_covariates() const noexcept { return k_; }

    /// Same units and outcomes under a different treated-count allocation.
    Population with_design(ExperimentDesign design) const;

private:
    ExperimentDesign design_;
    std::vector<StratumPotentials> strata_;
    int k_ = 0;
};

/// Per-stratum binary treatment indicators.
struct Assignment {
    std::vector<std::vector<std::uint8_t>> z;

    bool operator==(const Assignment&) const = default;
    auto operator<=>(const Assignment&) const = default;
};

struct StratumObservations {
    std::vector<std::uint8_t> z;
    Eigen::VectorXd y;
    Eigen::MatrixXd x;
};

/// One realized experiment.
class ObservedDataset {
public:
    ObservedDataset(ExperimentDesign design, std::vector<StratumObservations> strata,
                    std::vector<std::string> labels = {});

    const ExperimentDesign& design() const noexcept { return design_; }
    const std::vector<StratumObservations>& strata() const noexcept { return strata_; }
    const StratumObservations& stratum(int i) const { return strata_.at(static_cast<std::size_t>(i)); }
    const std::vector<std::string>& labels() const noexcept { return labels_; }
    int num_covariates() const noexcept { return k_; }

    /// Copy with y replaced by a*y + b.
    ObservedDataset affine_outcomes(double a, double b) const;
    /// Copy with every covariate row shifted by `shift`.
    ObservedDataset shifted_covariates(const Eigen::VectorXd& shift) const;

private:
    ExperimentDesign design_;
    std::vector<StratumObservations> strata_;
    std::vector<std::string> labels_;
    int k_ = 0;
};

/// Applies an assignment to a population: y = z*y(1) + (1-z)*y(0).
ObservedDataset observe(const Population& population, const Assignment& assignment);

struct RawRow {
    std::string stratum;
    int z = 0;
    double y = 0.0;
    std::vector<double> x;
};

/// Builds a dataset from raw rows. Strata are indexed in first-appearance
/// order; n_i is the row count and n1_i the number of z = 1 rows.
ObservedDataset validate_dataset(const std::vector<RawRow>& rows);

/// Sample moments of one arm in one stratum. Variances are nullopt when the
/// arm has fewer than two units.
struct ArmSummary {
    int count = 0;
    double mean_y = 0.0;
    Eigen::VectorXd mean_x;
    std::optional<double> var_y;
    std::optional<Eigen::MatrixXd> cov_xx;
    std::optional<Eigen::VectorXd> cov_xy;
};

struct StratumSummary {
    std::array<ArmSummary, 2> arm;  // indexed by arm_index
    Eigen::VectorXd mean_x_all;

    const ArmSummary& operator[](Arm a) const { return arm[static_cast<std::size_t>(arm_index(a))]; }
};

std::vector<StratumSummary> stratum_summaries(const ObservedDataset& dataset);

/// Means and unbiased (n - 1) covariances of the columns of `rows`,
/// accumulated with compensated summation. `cov` is empty when fewer than two rows.
struct ColumnMoments {
    Eigen::VectorXd mean;
    std::optional<Eigen::MatrixXd> cov;
};

ColumnMoments column_moments(const Eigen::MatrixXd& rows);

struct ConditionDiagnostics {
    double m1N = 0.0;
    /// Empty when y(0) is constant within every stratum.
    std::optional<double> m0N;
    double max_sq_dist_y1 = 0.0;  // divided by N
    double max_sq_dist_y0 = 0.0;  // divided by N
    std::vector<double> max_sq_dist_x;  // per covariate, divided by N
    std::pair<double, double> p_range{0.0, 0.0};
};

ConditionDiagnostics condition_diagnostics(const Population& population);

}  // namespace stratadj
