#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "stratadj/core.hpp"
#include "stratadj/randomization.hpp"

namespace stratadj {

/// Fixed population quantities. All variances and covariances use n_i - 1.
struct StratumMoments {
    double mean_y1 = 0.0;
    double mean_y0 = 0.0;
    Eigen::VectorXd mean_x;
    double s2_y1 = 0.0;
    double s2_y0 = 0.0;
    double s2_tau = 0.0;
    Eigen::MatrixXd s_xx;
    Eigen::VectorXd s_xy1;
    Eigen::VectorXd s_xy0;
};

struct PopulationMoments {
    double tau = 0.0;
    double sigma2_unadj = 0.0;
    /// Population mean of y(1) and the variance of the weighted treated sample mean.
    double mean_y1 = 0.0;
    double sigma2_y1 = 0.0;
    std::vector<StratumMoments> strata;
    Eigen::MatrixXd s_xx;   // sum_i c_i S_iXX
    Eigen::VectorXd s_xy1;  // sum_i c_i S_iXy(1)
    Eigen::VectorXd s_xy0;
};

PopulationMoments population_moments(const Population& population);

enum class ProjectionMode { pooled, per_stratum };

/// Projection of the potential outcomes onto stratum-centered covariates.
/// In pooled mode every entry of beta1/beta0 holds the same vector.
struct ProjectionSet {
    ProjectionMode mode = ProjectionMode::pooled;
    std::vector<Eigen::VectorXd> beta1;
    std::vector<Eigen::VectorXd> beta0;
    std::vector<Eigen::VectorXd> resid1;
    std::vector<Eigen::VectorXd> resid0;
    std::vector<double> s2_resid1;
    std::vector<double> s2_resid0;
    std::vector<double> s2_resid_diff;
    std::vector<Eigen::VectorXd> s_x_resid1;
    std::vector<Eigen::VectorXd> s_x_resid0;
    double sigma2 = 0.0;
};

/// Throws SingularCovariance when a required covariance matrix has condition
/// number above 1e12.
ProjectionSet population_projections(const Population& population, ProjectionMode mode);

struct VarianceGaps {
    std::vector<double> delta2;        // pooled slopes
    std::vector<double> tilde_delta2;  // per-stratum slopes
    double gap_unadj_ols = 0.0;        // sum_i c_i delta2_i
    bool gap_unadj_ols_exact = false;  // true only when all p_i are equal
    double gap_ols_olsint = 0.0;       // N (sigma2_ols - sigma2_ols_int), exact
};

VarianceGaps variance_gaps(const Population& population, const ProjectionSet& pooled,
                           const ProjectionSet& per_stratum);

using AssignmentStatistic = std::function<double(const Assignment&)>;

struct EnumerationOptions {
    std::uint64_t cap = kDefaultEnumerationCap;
    int workers = 1;
    /// When false, an estimator error aborts the enumeration.
    bool skip_errors = true;
};

struct ExactMoments {
    double mean = 0.0;
    double variance = 0.0;  // over the uniform randomization distribution
    std::uint64_t count = 0;
    std::uint64_t skipped = 0;
};

/// Exact mean and variance of a statistic over every assignment.
ExactMoments exact_estimator_moments(const Population& population, const AssignmentStatistic& statistic,
                                     const EnumerationOptions& options = {});

/// Lifts a statistic of the observed data to a statistic of the assignment.
AssignmentStatistic on_observed(const Population& population,
                                std::function<double(const ObservedDataset&)> statistic);

/// Enumeration mean of the unadjusted variance estimator minus sigma2_unadj.
double variance_estimator_bias(const Population& population, const EnumerationOptions& options = {});

/// sum_i c_i yhat_i(arm).
double weighted_arm_mean(const ObservedDataset& dataset, Arm arm);

}  // namespace stratadj
