#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "stratadj/core.hpp"

namespace stratadj {

enum class Method { unadj, ols, ols_int };

std::string_view to_string(Method m);
Method parse_method(std::string_view name);

/// Which count the degrees-of-freedom adjustment of the interacted residual
/// variance subtracts K + 1 from: the arm actually summed (default) or the
/// whole stratum.
enum class DfDivisor { arm, stratum };

std::string_view to_string(DfDivisor d);
DfDivisor parse_df_divisor(std::string_view name);

struct EstimateReport {
    Method method = Method::unadj;
    double tau_hat = 0.0;
    std::optional<double> var_hat;
    std::optional<double> se;
    std::optional<std::pair<double, double>> ci;
    double alpha = 0.05;
    std::vector<double> per_stratum;
    /// Empty for unadj; {beta1, beta0} for ols; {beta1_1, beta0_1, beta1_2, ...} for ols_int.
    std::vector<Eigen::VectorXd> beta_hats;
    /// Why var_hat is missing, when it is.
    std::string note;
};

/// Weighted least-squares problem in matrix form: one row per observation.
struct WlsProblem {
    Eigen::MatrixXd regressors;
    Eigen::VectorXd response;
    Eigen::VectorXd weights;
};

/// Minimizes sum_r w_r (response_r - regressors_r' beta)^2 by column-pivoted
/// Householder QR of the sqrt(w)-scaled rows. Throws RankDeficient, naming
/// the dependent columns, when the pivoted rank is below the column count.
Eigen::VectorXd wls_solve(const WlsProblem& problem);

/// (tau_hat -/+ q sqrt(var_hat)) with q the upper alpha/2 normal quantile.
std::pair<double, double> confidence_interval(double tau_hat, double var_hat, double alpha);

EstimateReport estimate_unadjusted(const ObservedDataset& dataset, double alpha = 0.05);

/// Pooled arm slope: weights c_i / (n_arm,i - 1) on arm-mean-centered data.
Eigen::VectorXd fit_pooled_wls(const ObservedDataset& dataset, Arm arm);

EstimateReport estimate_ols(const ObservedDataset& dataset, double alpha = 0.05);

/// Coefficient on Z*w from the single weighted regression with stratum
/// dummies and treatment interactions. Verification path for estimate_ols.
double estimate_ols_design_matrix(const ObservedDataset& dataset);

/// Unweighted slope within one stratum-arm, centered at the arm means.
Eigen::VectorXd fit_stratum_ols(const ObservedDataset& dataset, int stratum, Arm arm);

EstimateReport estimate_ols_int(const ObservedDataset& dataset, double alpha = 0.05,
                                DfDivisor divisor = DfDivisor::arm);

/// Dispatch by method tag.
EstimateReport estimate(Method method, const ObservedDataset& dataset, double alpha = 0.05,
                        DfDivisor divisor = DfDivisor::arm);

/// Throws MethodInapplicable when `method` cannot run on a design with K
/// covariates; the message is the user-facing reason.
void check_applicable(Method method, const ExperimentDesign& design, int num_covariates);

}  // namespace stratadj
