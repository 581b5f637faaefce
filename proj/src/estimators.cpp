#include "stratadj/estimators.hpp"

#include <algorithm>
#include <cmath>

#include "stratadj/error.hpp"
#include "stratadj/numeric.hpp"

namespace stratadj {

std::string_view to_string(Method m) {
    switch (m) {
        case Method::unadj: return "unadj";
        case Method::ols: return "ols";
        case Method::ols_int: return "ols_int";
    }
    return "unknown";
}

Method parse_method(std::string_view name) {
    if (name == "unadj") return Method::unadj;
    if (name == "ols") return Method::ols;
    if (name == "ols_int") return Method::ols_int;
    throw Error(ErrorKind::InvalidInput, "unknown method '" + std::string(name) + "'");
}

std::string_view to_string(DfDivisor d) { return d == DfDivisor::arm ? "arm" : "stratum"; }

DfDivisor parse_df_divisor(std::string_view name) {
    if (name == "arm") return DfDivisor::arm;
    if (name == "stratum") return DfDivisor::stratum;
    throw Error(ErrorKind::InvalidInput, "df divisor must be 'arm' or 'stratum'");
}

namespace {

constexpr double kRankTolerance = 1e-10;

std::string index_list(const std::vector<Eigen::Index>& idx) {
    std::string s;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(idx[i] + 1);
    }
    return s;
}

/// Arm units of one stratum, centered at the arm means.
struct ArmBlock {
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
};

ArmBlock centered_arm(const StratumObservations& s, const ArmSummary& summary, Arm arm) {
    const std::uint8_t flag = arm == Arm::treated ? 1 : 0;
    const Eigen::Index k = s.x.cols();
    ArmBlock block{Eigen::MatrixXd(summary.count, k), Eigen::VectorXd(summary.count)};
    Eigen::Index r = 0;
    for (Eigen::Index j = 0; j < s.y.size(); ++j) {
        if (s.z[static_cast<std::size_t>(j)] != flag) continue;
        block.x.row(r) = s.x.row(j) - summary.mean_x.transpose();
        block.y[r] = s.y[j] - summary.mean_y;
        ++r;
    }
    return block;
}

/// Entries at rounding level of the raw covariate scale are treated as exact
/// zeros so constant covariates cannot slip past the relative pivot test.
void zero_rounding_noise(Eigen::MatrixXd& centered, const Eigen::MatrixXd& raw) {
    for (Eigen::Index c = 0; c < centered.cols(); ++c) {
        const double scale = std::max(1.0, raw.col(c).cwiseAbs().maxCoeff());
        if (centered.col(c).cwiseAbs().maxCoeff() <= 1e-13 * scale) centered.col(c).setZero();
    }
}

double residual_ss(const ArmBlock& block, const Eigen::VectorXd& beta) {
    CompensatedSum acc;
    for (Eigen::Index r = 0; r < block.y.size(); ++r) {
        const double e = block.y[r] - block.x.row(r).dot(beta);
        acc.add(e * e);
    }
    return acc.value();
}

void require_covariates(const ObservedDataset& dataset, Method m) {
    if (dataset.num_covariates() < 1) {
        throw Error(ErrorKind::MethodInapplicable,
                    std::string(to_string(m)) + " requires at least one covariate");
    }
}

void fill_interval(EstimateReport& report) {
    if (!report.var_hat) return;
    const double v = std::max(0.0, *report.var_hat);
    report.var_hat = v;
    report.se = std::sqrt(v);
    report.ci = confidence_interval(report.tau_hat, v, report.alpha);
}

double adjusted_mean(const ArmSummary& arm, const Eigen::VectorXd& mean_x_all, const Eigen::VectorXd& beta) {
    return arm.mean_y - (arm.mean_x - mean_x_all).dot(beta);
}

}  // namespace

Eigen::VectorXd wls_solve(const WlsProblem& problem) {
    const Eigen::Index rows = problem.regressors.rows();
    const Eigen::Index k = problem.regressors.cols();
    if (problem.response.size() != rows || problem.weights.size() != rows) {
        throw Error(ErrorKind::DimensionMismatch, "wls: response/weights length differs from regressor rows");
    }
    if ((problem.weights.array() < 0.0).any() || !problem.weights.allFinite()) {
        throw Error(ErrorKind::InvalidInput, "wls: weights must be finite and nonnegative");
    }
    if (!(problem.weights.array() > 0.0).any()) {
        throw Error(ErrorKind::InvalidInput, "wls: no strictly positive weight");
    }
    if (k == 0) return Eigen::VectorXd();

    const Eigen::ArrayXd root_w = problem.weights.array().sqrt();
    const Eigen::MatrixXd a = problem.regressors.array().colwise() * root_w;
    const Eigen::VectorXd b = (problem.response.array() * root_w).matrix();

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a.rows(), a.cols());
    qr.setThreshold(kRankTolerance);
    qr.compute(a);
    const Eigen::Index rank = qr.rank();
    if (rank < k) {
        std::vector<Eigen::Index> dependent;
        for (Eigen::Index c = rank; c < k; ++c) dependent.push_back(qr.colsPermutation().indices()[c]);
        std::sort(dependent.begin(), dependent.end());
        throw Error(ErrorKind::RankDeficient, "regressor matrix has rank " + std::to_string(rank) + " < " +
                                                  std::to_string(k) + "; dependent column(s) " +
                                                  index_list(dependent));
    }
    return qr.solve(b);
}

std::pair<double, double> confidence_interval(double tau_hat, double var_hat, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorKind::InvalidAlpha, "alpha must lie in (0,1)");
    if (!(var_hat >= 0.0)) throw Error(ErrorKind::InvalidInput, "variance must be nonnegative");
    const double half = normal_upper_quantile(alpha) * std::sqrt(var_hat);
    return {tau_hat - half, tau_hat + half};
}

EstimateReport estimate_unadjusted(const ObservedDataset& dataset, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorKind::InvalidAlpha, "alpha must lie in (0,1)");
    const auto& design = dataset.design();
    const auto summaries = stratum_summaries(dataset);
    EstimateReport report;
    report.method = Method::unadj;
    report.alpha = alpha;
    CompensatedSum tau;
    CompensatedSum var;
    bool var_defined = true;
    for (int i = 0; i < design.num_strata(); ++i) {
        const auto& s = summaries[static_cast<std::size_t>(i)];
        const auto& d = design.stratum(i);
        const double c = design.weight(i);
        const double tau_i = s[Arm::treated].mean_y - s[Arm::control].mean_y;
        report.per_stratum.push_back(tau_i);
        tau.add(c * tau_i);
        if (s[Arm::treated].var_y && s[Arm::control].var_y) {
            var.add(c * c * (*s[Arm::treated].var_y / d.n1 + *s[Arm::control].var_y / d.n0()));
        } else if (var_defined) {
            var_defined = false;
            report.note = "variance undefined: stratum " + dataset.labels()[static_cast<std::size_t>(i)] +
                          " has an arm with fewer than 2 units";
        }
    }
    report.tau_hat = tau.value();
    if (var_defined) report.var_hat = var.value();
    fill_interval(report);
    return report;
}

Eigen::VectorXd fit_pooled_wls(const ObservedDataset& dataset, Arm arm) {
    require_covariates(dataset, Method::ols);
    const auto& design = dataset.design();
    const auto summaries = stratum_summaries(dataset);
    const int k = dataset.num_covariates();

    Eigen::Index total = 0;
    for (int i = 0; i < design.num_strata(); ++i) {
        const int count = design.stratum(i).count(arm);
        if (count < 2) {
            throw Error(ErrorKind::ArmTooSmall, "stratum " + dataset.labels()[static_cast<std::size_t>(i)] +
                                                    " has fewer than 2 units in the " +
                                                    (arm == Arm::treated ? "treated" : "control") + " arm");
        }
        total += count;
    }
    WlsProblem problem{Eigen::MatrixXd(total, k), Eigen::VectorXd(total), Eigen::VectorXd(total)};
    Eigen::MatrixXd raw(total, k);
    Eigen::Index r = 0;
    for (int i = 0; i < design.num_strata(); ++i) {
        const auto& s = dataset.stratum(i);
        const auto block = centered_arm(s, summaries[static_cast<std::size_t>(i)][arm], arm);
        const double w = design.weight(i) / (design.stratum(i).count(arm) - 1);
        const Eigen::Index m = block.y.size();
        problem.regressors.middleRows(r, m) = block.x;
        problem.response.segment(r, m) = block.y;
        problem.weights.segment(r, m).setConstant(w);
        raw.middleRows(r, m) = block.x.rowwise() + summaries[static_cast<std::size_t>(i)][arm].mean_x.transpose();
        r += m;
    }
    zero_rounding_noise(problem.regressors, raw);
    return wls_solve(problem);
}

EstimateReport estimate_ols(const ObservedDataset& dataset, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorKind::InvalidAlpha, "alpha must lie in (0,1)");
    const auto& design = dataset.design();
    const Eigen::VectorXd beta1 = fit_pooled_wls(dataset, Arm::treated);
    const Eigen::VectorXd beta0 = fit_pooled_wls(dataset, Arm::control);
    const auto summaries = stratum_summaries(dataset);

    EstimateReport report;
    report.method = Method::ols;
    report.alpha = alpha;
    CompensatedSum tau;
    CompensatedSum var;
    for (int i = 0; i < design.num_strata(); ++i) {
        const auto& s = summaries[static_cast<std::size_t>(i)];
        const auto& d = design.stratum(i);
        const double c = design.weight(i);
        const double tau_i = adjusted_mean(s[Arm::treated], s.mean_x_all, beta1) -
                             adjusted_mean(s[Arm::control], s.mean_x_all, beta0);
        report.per_stratum.push_back(tau_i);
        tau.add(c * tau_i);
        const auto& obs = dataset.stratum(i);
        const double s1 = residual_ss(centered_arm(obs, s[Arm::treated], Arm::treated), beta1) / (d.n1 - 1);
        const double s0 = residual_ss(centered_arm(obs, s[Arm::control], Arm::control), beta0) / (d.n0() - 1);
        var.add(c * c * (s1 / d.n1 + s0 / d.n0()));
    }
    report.tau_hat = tau.value();
    report.var_hat = var.value();
    report.beta_hats = {beta1, beta0};
    fill_interval(report);
    return report;
}

double estimate_ols_design_matrix(const ObservedDataset& dataset) {
    require_covariates(dataset, Method::ols);
    const auto& design = dataset.design();
    const int b = design.num_strata();
    const int k = dataset.num_covariates();
    const Eigen::Index n = design.total_units();
    const Eigen::Index cols = 2 + 2 * (b - 1) + 2 * k;
    for (int i = 0; i < b; ++i) {
        const auto& d = design.stratum(i);
        if (d.n1 < 2 || d.n0() < 2) {
            throw Error(ErrorKind::ArmTooSmall, "stratum " + dataset.labels()[static_cast<std::size_t>(i)] +
                                                    " needs at least 2 units per arm");
        }
    }

    WlsProblem problem{Eigen::MatrixXd::Zero(n, cols), Eigen::VectorXd(n), Eigen::VectorXd::Ones(n)};
    Eigen::Index r = 0;
    for (int i = 0; i < b; ++i) {
        const auto& s = dataset.stratum(i);
        const auto& d = design.stratum(i);
        const Eigen::VectorXd xbar = column_moments(s.x).mean;
        const double w1 = std::sqrt(static_cast<double>(d.n) / (d.n1 - 1));
        const double w0 = std::sqrt(static_cast<double>(d.n) / (d.n0() - 1));
        for (Eigen::Index j = 0; j < s.y.size(); ++j, ++r) {
            const bool treated = s.z[static_cast<std::size_t>(j)] == 1;
            const double w = treated ? w1 : w0;
            const double zf = treated ? 1.0 : 0.0;
            auto row = problem.regressors.row(r);
            row[0] = w;
            row[1] = zf * w;
            for (int kk = 1; kk < b; ++kk) {
                const double dummy = ((i == kk) ? 1.0 : 0.0) - design.weight(kk);
                row[2 + (kk - 1)] = dummy * w;
                row[2 + (b - 1) + (kk - 1)] = zf * dummy * w;
            }
            for (int c = 0; c < k; ++c) {
                const double xw = (s.x(j, c) - xbar[c]) * w;
                row[2 + 2 * (b - 1) + c] = xw;
                row[2 + 2 * (b - 1) + k + c] = zf * xw;
            }
            problem.response[r] = s.y[j] * w;
        }
    }
    return wls_solve(problem)[1];
}

namespace {

Eigen::VectorXd solve_arm_block(ArmBlock block, const Eigen::VectorXd& mean_x, const std::string& label) {
    const Eigen::MatrixXd raw = block.x.rowwise() + mean_x.transpose();
    zero_rounding_noise(block.x, raw);
    try {
        return wls_solve({block.x, block.y, Eigen::VectorXd::Ones(block.y.size())});
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::RankDeficient) throw;
        throw Error(ErrorKind::RankDeficient, "stratum " + label + ": " + e.what());
    }
}

void require_arm_size(const StratumDesign& d, Arm arm, int k, const std::string& label) {
    if (d.count(arm) < k + 2) {
        throw Error(ErrorKind::ArmTooSmall, "stratum " + label + " has " + std::to_string(d.count(arm)) +
                                                " " + (arm == Arm::treated ? "treated" : "control") +
                                                " units; need at least K + 2 = " + std::to_string(k + 2));
    }
}

}  // namespace

Eigen::VectorXd fit_stratum_ols(const ObservedDataset& dataset, int stratum, Arm arm) {
    const int k = dataset.num_covariates();
    const auto& d = dataset.design().stratum(stratum);
    const std::string& label = dataset.labels()[static_cast<std::size_t>(stratum)];
    require_arm_size(d, arm, k, label);
    const auto summaries = stratum_summaries(dataset);
    const auto& summary = summaries[static_cast<std::size_t>(stratum)][arm];
    return solve_arm_block(centered_arm(dataset.stratum(stratum), summary, arm), summary.mean_x, label);
}

EstimateReport estimate_ols_int(const ObservedDataset& dataset, double alpha, DfDivisor divisor) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorKind::InvalidAlpha, "alpha must lie in (0,1)");
    require_covariates(dataset, Method::ols_int);
    const auto& design = dataset.design();
    const int k = dataset.num_covariates();
    for (int i = 0; i < design.num_strata(); ++i) {
        const auto& d = design.stratum(i);
        if (d.n1 <= k + 1 || d.n0() <= k + 1) {
            throw Error(ErrorKind::ArmTooSmall,
                        "stratum " + dataset.labels()[static_cast<std::size_t>(i)] + " has arm sizes (" +
                            std::to_string(d.n1) + ", " + std::to_string(d.n0()) + ") <= K + 1 = " +
                            std::to_string(k + 1));
        }
    }
    const auto summaries = stratum_summaries(dataset);

    EstimateReport report;
    report.method = Method::ols_int;
    report.alpha = alpha;
    CompensatedSum tau;
    CompensatedSum var;
    for (int i = 0; i < design.num_strata(); ++i) {
        const auto& s = summaries[static_cast<std::size_t>(i)];
        const auto& d = design.stratum(i);
        const auto& obs = dataset.stratum(i);
        const double c = design.weight(i);
        const std::string& label = dataset.labels()[static_cast<std::size_t>(i)];
        const ArmBlock block1 = centered_arm(obs, s[Arm::treated], Arm::treated);
        const ArmBlock block0 = centered_arm(obs, s[Arm::control], Arm::control);
        const Eigen::VectorXd beta1 = solve_arm_block(block1, s[Arm::treated].mean_x, label);
        const Eigen::VectorXd beta0 = solve_arm_block(block0, s[Arm::control].mean_x, label);
        const double tau_i = adjusted_mean(s[Arm::treated], s.mean_x_all, beta1) -
                             adjusted_mean(s[Arm::control], s.mean_x_all, beta0);
        report.per_stratum.push_back(tau_i);
        tau.add(c * tau_i);

        const int df1 = (divisor == DfDivisor::arm ? d.n1 : d.n) - k - 1;
        const int df0 = (divisor == DfDivisor::arm ? d.n0() : d.n) - k - 1;
        const double s1 = residual_ss(block1, beta1) / df1;
        const double s0 = residual_ss(block0, beta0) / df0;
        var.add(c * c * (s1 / d.n1 + s0 / d.n0()));
        report.beta_hats.push_back(beta1);
        report.beta_hats.push_back(beta0);
    }
    report.tau_hat = tau.value();
    report.var_hat = var.value();
    fill_interval(report);
    return report;
}

EstimateReport estimate(Method method, const ObservedDataset& dataset, double alpha, DfDivisor divisor) {
    switch (method) {
        case Method::unadj: return estimate_unadjusted(dataset, alpha);
        case Method::ols: return estimate_ols(dataset, alpha);
        case Method::ols_int: return estimate_ols_int(dataset, alpha, divisor);
    }
    throw Error(ErrorKind::InvalidInput, "unknown method");
}

void check_applicable(Method method, const ExperimentDesign& design, int num_covariates) {
    if (method == Method::unadj) return;
    if (num_covariates < 1) throw Error(ErrorKind::MethodInapplicable, "no covariates");
    int min_arm = design.stratum(0).n;
    for (const auto& s : design.strata()) min_arm = std::min({min_arm, s.n1, s.n0()});
    if (method == Method::ols && min_arm < 2) {
        throw Error(ErrorKind::MethodInapplicable, "arm size < 2");
    }
    if (method == Method::ols_int && min_arm <= num_covariates + 1) {
        throw Error(ErrorKind::MethodInapplicable, "arm size ≤ K+1");
    }
}

}  // namespace stratadj
