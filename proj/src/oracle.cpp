#include "stratadj/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "stratadj/error.hpp"
#include "stratadj/estimators.hpp"
#include "stratadj/numeric.hpp"
#include "stratadj/parallel.hpp"

namespace stratadj {

namespace {

constexpr double kMaxCondition = 1e12;

Eigen::VectorXd solve_covariance(const Eigen::MatrixXd& s, const Eigen::VectorXd& rhs, const std::string& what) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(lo > 0.0) || hi / lo > kMaxCondition) {
        throw Error(ErrorKind::SingularCovariance, what + " is singular or ill-conditioned");
    }
    return s.ldlt().solve(rhs);
}

double quad(const Eigen::VectorXd& v, const Eigen::MatrixXd& m) { return v.dot(m * v); }

}  // namespace

PopulationMoments population_moments(const Population& population) {
    const auto& design = population.design();
    const int k = population.num_covariates();
    PopulationMoments out;
    out.s_xx = Eigen::MatrixXd::Zero(k, k);
    out.s_xy1 = Eigen::VectorXd::Zero(k);
    out.s_xy0 = Eigen::VectorXd::Zero(k);
    CompensatedSum tau;
    CompensatedSum sigma2;
    CompensatedSum mean1;
    CompensatedSum sigma2_y1;
    for (int i = 0; i < design.num_strata(); ++i) {
        const auto& s = population.stratum(i);
        const auto& d = design.stratum(i);
        const double c = design.weight(i);
        // Joint columns [x | y1 | y0 | y1 - y0].
        Eigen::MatrixXd joint(d.n, k + 3);
        joint.leftCols(k) = s.x;
        joint.col(k) = s.y1;
        joint.col(k + 1) = s.y0;
        joint.col(k + 2) = s.y1 - s.y0;
        const auto m = column_moments(joint);
        const auto& cov = *m.cov;

        StratumMoments sm;
        sm.mean_x = m.mean.head(k);
        sm.mean_y1 = m.mean[k];
        sm.mean_y0 = m.mean[k + 1];
        sm.s2_y1 = cov(k, k);
        sm.s2_y0 = cov(k + 1, k + 1);
        sm.s2_tau = cov(k + 2, k + 2);
        sm.s_xx = cov.topLeftCorner(k, k);
        sm.s_xy1 = cov.col(k).head(k);
        sm.s_xy0 = cov.col(k + 1).head(k);

        tau.add(c * (sm.mean_y1 - sm.mean_y0));
        sigma2.add(c * c * (sm.s2_y1 / d.n1 + sm.s2_y0 / d.n0() - sm.s2_tau / d.n));
        mean1.add(c * sm.mean_y1);
        sigma2_y1.add(c * c * sm.s2_y1 * (1.0 / d.n1 - 1.0 / d.n));
        out.s_xx += c * sm.s_xx;
        out.s_xy1 += c * sm.s_xy1;
        out.s_xy0 += c * sm.s_xy0;
        out.strata.push_back(std::move(sm));
    }
    out.tau = tau.value();
    out.sigma2_unadj = sigma2.value();
    out.mean_y1 = mean1.value();
    out.sigma2_y1 = sigma2_y1.value();
    return out;
}

ProjectionSet population_projections(const Population& population, ProjectionMode mode) {
    const auto& design = population.design();
    if (population.num_covariates() < 1) {
        throw Error(ErrorKind::InvalidInput, "projections need at least one covariate");
    }
    const auto moments = population_moments(population);
    const int b = design.num_strata();
    ProjectionSet out;
    out.mode = mode;

    if (mode == ProjectionMode::pooled) {
        const Eigen::VectorXd beta1 = solve_covariance(moments.s_xx, moments.s_xy1, "weighted covariance S_XX");
        const Eigen::VectorXd beta0 = solve_covariance(moments.s_xx, moments.s_xy0, "weighted covariance S_XX");
        out.beta1.assign(static_cast<std::size_t>(b), beta1);
        out.beta0.assign(static_cast<std::size_t>(b), beta0);
    } else {
        for (int i = 0; i < b; ++i) {
            const auto& sm = moments.strata[static_cast<std::size_t>(i)];
            const std::string what = "stratum " + std::to_string(i + 1) + " covariance S_iXX";
            out.beta1.push_back(solve_covariance(sm.s_xx, sm.s_xy1, what));
            out.beta0.push_back(solve_covariance(sm.s_xx, sm.s_xy0, what));
        }
    }

    CompensatedSum sigma2;
    for (int i = 0; i < b; ++i) {
        const auto& s = population.stratum(i);
        const auto& sm = moments.strata[static_cast<std::size_t>(i)];
        const auto& d = design.stratum(i);
        const double c = design.weight(i);
        const auto iu = static_cast<std::size_t>(i);
        const Eigen::MatrixXd xc = s.x.rowwise() - sm.mean_x.transpose();
        Eigen::VectorXd r1 = (s.y1.array() - sm.mean_y1).matrix() - xc * out.beta1[iu];
        Eigen::VectorXd r0 = (s.y0.array() - sm.mean_y0).matrix() - xc * out.beta0[iu];

        const int k = population.num_covariates();
        Eigen::MatrixXd joint(d.n, k + 3);
        joint.leftCols(k) = s.x;
        joint.col(k) = r1;
        joint.col(k + 1) = r0;
        joint.col(k + 2) = r1 - r0;
        const auto m = column_moments(joint);
        const auto& cov = *m.cov;
        out.s2_resid1.push_back(cov(k, k));
        out.s2_resid0.push_back(cov(k + 1, k + 1));
        out.s2_resid_diff.push_back(cov(k + 2, k + 2));
        out.s_x_resid1.push_back(cov.col(k).head(k));
        out.s_x_resid0.push_back(cov.col(k + 1).head(k));
        out.resid1.push_back(std::move(r1));
        out.resid0.push_back(std::move(r0));
        sigma2.add(c * c * (out.s2_resid1[iu] / d.n1 + out.s2_resid0[iu] / d.n0() - out.s2_resid_diff[iu] / d.n));
    }
    out.sigma2 = sigma2.value();
    return out;
}

VarianceGaps variance_gaps(const Population& population, const ProjectionSet& pooled,
                           const ProjectionSet& per_stratum) {
    if (pooled.mode != ProjectionMode::pooled || per_stratum.mode != ProjectionMode::per_stratum) {
        throw Error(ErrorKind::InvalidInput, "variance_gaps needs one pooled and one per-stratum projection");
    }
    const auto& design = population.design();
    const auto moments = population_moments(population);
    VarianceGaps out;
    CompensatedSum gap1;
    CompensatedSum gap2;
    const auto& props = design.proportions();
    out.gap_unadj_ols_exact = std::all_of(props.begin(), props.end(), [&](double p) { return p == props.front(); });
    for (int i = 0; i < design.num_strata(); ++i) {
        const auto iu = static_cast<std::size_t>(i);
        const double p = design.proportion(i);
        const double c = design.weight(i);
        const auto& sxx = moments.strata[iu].s_xx;
        const double scale = p * (1.0 - p);
        const Eigen::VectorXd b_pooled = (1.0 - p) * pooled.beta1[iu] + p * pooled.beta0[iu];
        const Eigen::VectorXd b_strat = (1.0 - p) * per_stratum.beta1[iu] + p * per_stratum.beta0[iu];
        const Eigen::VectorXd gamma = (1.0 - p) * (per_stratum.beta1[iu] - pooled.beta1[iu]) +
                                      p * (per_stratum.beta0[iu] - pooled.beta0[iu]);
        out.delta2.push_back(quad(b_pooled, sxx) / scale);
        out.tilde_delta2.push_back(quad(b_strat, sxx) / scale);
        gap1.add(c * out.delta2.back());
        gap2.add(c * quad(gamma, sxx) / scale);
    }
    out.gap_unadj_ols = gap1.value();
    out.gap_ols_olsint = gap2.value();
    return out;
}

ExactMoments exact_estimator_moments(const Population& population, const AssignmentStatistic& statistic,
                                     const EnumerationOptions& options) {
    AssignmentEnumerator enumerator(population.design(), options.cap);
    constexpr std::size_t kChunk = 4096;
    const double skip_marker = std::numeric_limits<double>::quiet_NaN();

    std::vector<double> values;
    values.reserve(enumerator.size());
    std::vector<Assignment> chunk;
    chunk.reserve(kChunk);
    std::vector<double> slots;
    std::uint64_t skipped = 0;
    Assignment a;
    bool more = true;
    while (more) {
        chunk.clear();
        while (chunk.size() < kChunk && (more = enumerator.next(a))) chunk.push_back(a);
        slots.assign(chunk.size(), 0.0);
        parallel_blocks(chunk.size(), options.workers, [&](std::size_t begin, std::size_t end) {
            for (std::size_t t = begin; t < end; ++t) {
                try {
                    slots[t] = statistic(chunk[t]);
                } catch (const Error&) {
                    if (!options.skip_errors) throw;
                    slots[t] = skip_marker;
                }
            }
        });
        for (double v : slots) {
            if (std::isnan(v)) {
                ++skipped;
            } else {
                values.push_back(v);
            }
        }
    }

    ExactMoments out;
    out.count = values.size();
    out.skipped = skipped;
    if (values.empty()) return out;
    out.mean = compensated_mean(values);
    CompensatedSum ss;
    for (double v : values) ss.add((v - out.mean) * (v - out.mean));
    out.variance = ss.value() / static_cast<double>(values.size());
    return out;
}

AssignmentStatistic on_observed(const Population& population,
                                std::function<double(const ObservedDataset&)> statistic) {
    return [&population, statistic = std::move(statistic)](const Assignment& a) {
        return statistic(observe(population, a));
    };
}

double variance_estimator_bias(const Population& population, const EnumerationOptions& options) {
    for (const auto& s : population.design().strata()) {
        if (s.n1 < 2 || s.n0() < 2) {
            throw Error(ErrorKind::VarianceUndefined,
                        "stratum " + std::to_string(s.id) + " has an arm with fewer than 2 units");
        }
    }
    const auto moments = population_moments(population);
    EnumerationOptions strict = options;
    strict.skip_errors = false;
    const auto exact = exact_estimator_moments(
        population, on_observed(population, [](const ObservedDataset& d) { return *estimate_unadjusted(d).var_hat; }),
        strict);
    return exact.mean - moments.sigma2_unadj;
}

double weighted_arm_mean(const ObservedDataset& dataset, Arm arm) {
    const auto summaries = stratum_summaries(dataset);
    CompensatedSum acc;
    for (int i = 0; i < dataset.design().num_strata(); ++i) {
        acc.add(dataset.design().weight(i) * summaries[static_cast<std::size_t>(i)][arm].mean_y);
    }
    return acc.value();
}

}  // namespace stratadj
