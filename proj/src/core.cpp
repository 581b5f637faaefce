#include "stratadj/core.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "stratadj/error.hpp"
#include "stratadj/numeric.hpp"

namespace stratadj {

ExperimentDesign::ExperimentDesign(std::vector<StratumDesign> strata) : strata_(std::move(strata)) {
    if (strata_.empty()) throw Error(ErrorKind::InvalidInput, "design has no strata");
    for (const auto& s : strata_) {
        if (s.n < 2) {
            throw Error(ErrorKind::InvalidInput,
                        "stratum " + std::to_string(s.id) + " has fewer than 2 units");
        }
        if (s.n1 < 1 || s.n1 > s.n - 1) {
            throw Error(ErrorKind::EmptyStratumArm,
                        "stratum " + std::to_string(s.id) + " must have both arms nonempty");
        }
        total_ += s.n;
    }
    weights_.reserve(strata_.size());
    proportions_.reserve(strata_.size());
    for (const auto& s : strata_) {
        weights_.push_back(static_cast<double>(s.n) / total_);
        proportions_.push_back(static_cast<double>(s.n1) / s.n);
    }
}

ExperimentDesign ExperimentDesign::from_counts(const std::vector<int>& sizes,
                                               const std::vector<int>& treated) {
    if (sizes.size() != treated.size()) {
        throw Error(ErrorKind::DimensionMismatch, "sizes and treated counts differ in length");
    }
    std::vector<StratumDesign> strata;
    strata.reserve(sizes.size());
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        strata.push_back({static_cast<int>(i) + 1, sizes[i], treated[i]});
    }
    return ExperimentDesign(std::move(strata));
}

bool ExperimentDesign::operator==(const ExperimentDesign& other) const {
    if (strata_.size() != other.strata_.size()) return false;
    for (std::size_t i = 0; i < strata_.size(); ++i) {
        const auto& a = strata_[i];
        const auto& b = other.strata_[i];
        if (a.id != b.id || a.n != b.n || a.n1 != b.n1) return false;
    }
    return true;
}

namespace {

bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

}  // namespace

Population::Population(ExperimentDesign design, std::vector<StratumPotentials> strata)
    : design_(std::move(design)), strata_(std::move(strata)) {
    if (static_cast<int>(strata_.size()) != design_.num_strata()) {
        throw Error(ErrorKind::DimensionMismatch, "population strata do not match design");
    }
    k_ = strata_.empty() ? 0 : static_cast<int>(strata_.front().x.cols());
    for (int i = 0; i < design_.num_strata(); ++i) {
        const auto& s = strata_[static_cast<std::size_t>(i)];
        const int n = design_.stratum(i).n;
        if (s.y1.size() != n || s.y0.size() != n || s.x.rows() != n || s.x.cols() != k_) {
            throw Error(ErrorKind::DimensionMismatch,
                        "stratum " + std::to_string(i + 1) + " arrays do not match n_i / K");
        }
        if (!s.y1.allFinite() || !s.y0.allFinite() || !all_finite(s.x)) {
            throw Error(ErrorKind::NonFinite, "stratum " + std::to_string(i + 1) + " has non-finite values");
        }
    }
}

Population Population::with_design(ExperimentDesign design) const {
    return Population(std::move(design), strata_);
}

ObservedDataset::ObservedDataset(ExperimentDesign design, std::vector<StratumObservations> strata,
                                 std::vector<std::string> labels)
    : design_(std::move(design)), strata_(std::move(strata)), labels_(std::move(labels)) {
    if (static_cast<int>(strata_.size()) != design_.num_strata()) {
        throw Error(ErrorKind::DimensionMismatch, "dataset strata do not match design");
    }
    if (labels_.empty()) {
        for (const auto& s : design_.strata()) labels_.push_back(std::to_string(s.id));
    }
    k_ = strata_.empty() ? 0 : static_cast<int>(strata_.front().x.cols());
    for (int i = 0; i < design_.num_strata(); ++i) {
        const auto& s = strata_[static_cast<std::size_t>(i)];
        const auto& d = design_.stratum(i);
        if (static_cast<int>(s.z.size()) != d.n || s.y.size() != d.n || s.x.rows() != d.n ||
            s.x.cols() != k_) {
            throw Error(ErrorKind::DimensionMismatch,
                        "stratum " + labels_[static_cast<std::size_t>(i)] + " arrays do not match n_i / K");
        }
        const int treated = static_cast<int>(std::count(s.z.begin(), s.z.end(), std::uint8_t{1}));
        if (treated != d.n1) {
            throw Error(ErrorKind::InvalidInput,
                        "stratum " + labels_[static_cast<std::size_t>(i)] + " treated count differs from design");
        }
        if (!s.y.allFinite() || !all_finite(s.x)) {
            throw Error(ErrorKind::NonFinite,
                        "stratum " + labels_[static_cast<std::size_t>(i)] + " has non-finite values");
        }
    }
}

ObservedDataset ObservedDataset::affine_outcomes(double a, double b) const {
    auto strata = strata_;
    for (auto& s : strata) s.y = (a * s.y.array() + b).matrix();
    return ObservedDataset(design_, std::move(strata), labels_);
}

ObservedDataset ObservedDataset::shifted_covariates(const Eigen::VectorXd& shift) const {
    auto strata = strata_;
    for (auto& s : strata) s.x.rowwise() += shift.transpose();
    return ObservedDataset(design_, std::move(strata), labels_);
}

ObservedDataset observe(const Population& population, const Assignment& assignment) {
    const auto& design = population.design();
    if (static_cast<int>(assignment.z.size()) != design.num_strata()) {
        throw Error(ErrorKind::DimensionMismatch, "assignment strata do not match population");
    }
    std::vector<StratumObservations> strata;
    strata.reserve(assignment.z.size());
    for (int i = 0; i < design.num_strata(); ++i) {
        const auto& pot = population.stratum(i);
        const auto& z = assignment.z[static_cast<std::size_t>(i)];
        StratumObservations obs;
        obs.z = z;
        obs.y.resize(pot.y1.size());
        for (Eigen::Index j = 0; j < pot.y1.size(); ++j) {
            obs.y[j] = z[static_cast<std::size_t>(j)] ? pot.y1[j] : pot.y0[j];
        }
        obs.x = pot.x;
        strata.push_back(std::move(obs));
    }
    return ObservedDataset(design, std::move(strata));
}

ObservedDataset validate_dataset(const std::vector<RawRow>& rows) {
    if (rows.empty()) throw Error(ErrorKind::InvalidInput, "dataset has no rows");
    const std::size_t k = rows.front().x.size();

    std::unordered_map<std::string, std::size_t> index;
    std::vector<std::string> labels;
    std::vector<std::vector<std::size_t>> members;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.x.size() != k) {
            throw Error(ErrorKind::DimensionMismatch,
                        "row " + std::to_string(r + 1) + " has " + std::to_string(row.x.size()) +
                            " covariates, expected " + std::to_string(k));
        }
        if (row.z != 0 && row.z != 1) {
            throw Error(ErrorKind::InvalidInput, "row " + std::to_string(r + 1) + ": z must be 0 or 1");
        }
        if (!std::isfinite(row.y) ||
            !std::all_of(row.x.begin(), row.x.end(), [](double v) { return std::isfinite(v); })) {
            throw Error(ErrorKind::NonFinite, "row " + std::to_string(r + 1) + " has a non-finite value");
        }
        auto [it, inserted] = index.try_emplace(row.stratum, labels.size());
        if (inserted) {
            labels.push_back(row.stratum);
            members.emplace_back();
        }
        members[it->second].push_back(r);
    }

    std::vector<StratumDesign> design;
    std::vector<StratumObservations> strata;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto& m = members[i];
        StratumObservations obs;
        obs.z.reserve(m.size());
        obs.y.resize(static_cast<Eigen::Index>(m.size()));
        obs.x.resize(static_cast<Eigen::Index>(m.size()), static_cast<Eigen::Index>(k));
        int treated = 0;
        for (std::size_t j = 0; j < m.size(); ++j) {
            const auto& row = rows[m[j]];
            obs.z.push_back(static_cast<std::uint8_t>(row.z));
            treated += row.z;
            obs.y[static_cast<Eigen::Index>(j)] = row.y;
            for (std::size_t c = 0; c < k; ++c) {
                obs.x(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(c)) = row.x[c];
            }
        }
        const int n = static_cast<int>(m.size());
        if (treated == 0 || treated == n) {
            throw Error(ErrorKind::EmptyStratumArm,
                        "stratum '" + labels[i] + "' has an empty " +
                            (treated == 0 ? std::string("treatment") : std::string("control")) + " arm");
        }
        design.push_back({static_cast<int>(i) + 1, n, treated});
        strata.push_back(std::move(obs));
    }
    return ObservedDataset(ExperimentDesign(std::move(design)), std::move(strata), std::move(labels));
}

ColumnMoments column_moments(const Eigen::MatrixXd& rows) {
    const Eigen::Index n = rows.rows();
    const Eigen::Index p = rows.cols();
    ColumnMoments out;
    out.mean = Eigen::VectorXd::Zero(p);
    if (n == 0) return out;
    for (Eigen::Index c = 0; c < p; ++c) {
        CompensatedSum acc;
        for (Eigen::Index r = 0; r < n; ++r) acc.add(rows(r, c));
        out.mean[c] = acc.value() / static_cast<double>(n);
    }
    if (n < 2) return out;
    const Eigen::MatrixXd centered = rows.rowwise() - out.mean.transpose();
    Eigen::MatrixXd cov(p, p);
    for (Eigen::Index a = 0; a < p; ++a) {
        for (Eigen::Index b = a; b < p; ++b) {
            CompensatedSum acc;
            for (Eigen::Index r = 0; r < n; ++r) acc.add(centered(r, a) * centered(r, b));
            cov(a, b) = cov(b, a) = acc.value() / static_cast<double>(n - 1);
        }
    }
    out.cov = std::move(cov);
    return out;
}

std::vector<StratumSummary> stratum_summaries(const ObservedDataset& dataset) {
    const int k = dataset.num_covariates();
    std::vector<StratumSummary> out;
    out.reserve(dataset.strata().size());
    for (const auto& s : dataset.strata()) {
        StratumSummary summary;
        const Eigen::Index n = s.y.size();
        for (Arm a : {Arm::control, Arm::treated}) {
            const std::uint8_t flag = a == Arm::treated ? 1 : 0;
            const auto count = std::count(s.z.begin(), s.z.end(), flag);
            // Joint [x | y] rows of this arm.
            Eigen::MatrixXd joint(count, k + 1);
            Eigen::Index r = 0;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (s.z[static_cast<std::size_t>(j)] != flag) continue;
                joint.row(r).head(k) = s.x.row(j);
                joint(r, k) = s.y[j];
                ++r;
            }
            const auto moments = column_moments(joint);
            ArmSummary& arm = summary.arm[static_cast<std::size_t>(arm_index(a))];
            arm.count = static_cast<int>(count);
            arm.mean_y = moments.mean[k];
            arm.mean_x = moments.mean.head(k);
            if (moments.cov) {
                arm.var_y = (*moments.cov)(k, k);
                arm.cov_xx = moments.cov->topLeftCorner(k, k);
                arm.cov_xy = moments.cov->col(k).head(k);
            }
        }
        summary.mean_x_all = column_moments(s.x).mean;
        out.push_back(std::move(summary));
    }
    return out;
}

ConditionDiagnostics condition_diagnostics(const Population& population) {
    const auto& design = population.design();
    const int k = population.num_covariates();
    const double total = design.total_units();
    ConditionDiagnostics out;
    out.max_sq_dist_x.assign(static_cast<std::size_t>(k), 0.0);

    CompensatedSum denom1;
    CompensatedSum denom0;
    double max_weighted1 = 0.0;
    double max_weighted0 = 0.0;
    double pmin = 1.0;
    double pmax = 0.0;
    for (int i = 0; i < design.num_strata(); ++i) {
        const auto& s = population.stratum(i);
        const auto& d = design.stratum(i);
        const double p = design.proportion(i);
        const double c = design.weight(i);
        pmin = std::min(pmin, p);
        pmax = std::max(pmax, p);

        const double mean1 = compensated_mean({s.y1.data(), static_cast<std::size_t>(s.y1.size())});
        const double mean0 = compensated_mean({s.y0.data(), static_cast<std::size_t>(s.y0.size())});
        const double var1 = sample_variance({s.y1.data(), static_cast<std::size_t>(s.y1.size())});
        const double var0 = sample_variance({s.y0.data(), static_cast<std::size_t>(s.y0.size())});
        denom1.add(c * var1 * d.n0() / d.n1);
        denom0.add(c * var0 * d.n1 / d.n0());

        for (Eigen::Index j = 0; j < s.y1.size(); ++j) {
            const double d1 = (s.y1[j] - mean1) * (s.y1[j] - mean1);
            const double d0 = (s.y0[j] - mean0) * (s.y0[j] - mean0);
            out.max_sq_dist_y1 = std::max(out.max_sq_dist_y1, d1);
            out.max_sq_dist_y0 = std::max(out.max_sq_dist_y0, d0);
            max_weighted1 = std::max(max_weighted1, d1 / (p * p));
            max_weighted0 = std::max(max_weighted0, d0 / ((1.0 - p) * (1.0 - p)));
        }
        const Eigen::VectorXd xbar = column_moments(s.x).mean;
        for (int col = 0; col < k; ++col) {
            for (Eigen::Index j = 0; j < s.x.rows(); ++j) {
                const double dist = s.x(j, col) - xbar[col];
                auto& slot = out.max_sq_dist_x[static_cast<std::size_t>(col)];
                slot = std::max(slot, dist * dist);
            }
        }
    }
    if (!(denom1.value() > 0.0)) {
        throw Error(ErrorKind::DegenerateVariance, "y(1) is constant within every stratum");
    }
    out.m1N = max_weighted1 / denom1.value();
    if (denom0.value() > 0.0) out.m0N = max_weighted0 / denom0.value();
    out.max_sq_dist_y1 /= total;
    out.max_sq_dist_y0 /= total;
    for (auto& v : out.max_sq_dist_x) v /= total;
    out.p_range = {pmin, pmax};
    return out;
}

}  // namespace stratadj
