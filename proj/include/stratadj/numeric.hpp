#pragma once

#include <cstddef>
#include <span>

namespace stratadj {

/// Neumaier-compensated running sum.
class CompensatedSum {
public:
    CompensatedSum() = default;

    void add(double x) noexcept {
        const double t = sum_ + x;
        if ((sum_ >= 0 ? sum_ : -sum_) >= (x >= 0 ? x : -x)) {
            carry_ += (sum_ - t) + x;
        } else {
            carry_ += (x - t) + sum_;
        }
        sum_ = t;
    }

    CompensatedSum& operator+=(double x) noexcept {
        add(x);
        return *this;
    }

    void merge(const CompensatedSum& other) noexcept {
        add(other.sum_);
        add(other.carry_);
    }

    double value() const noexcept { return sum_ + carry_; }

private:
    double sum_ = 0.0;
    double carry_ = 0.0;
};

double compensated_sum(std::span<const double> values) noexcept;
double compensated_mean(std::span<const double> values) noexcept;

/// Two-pass sample variance with divisor (n - 1). Requires n >= 2.
double sample_variance(std::span<const double> values) noexcept;

/// Standard normal cumulative distribution function.
double normal_cdf(double x) noexcept;

/// Inverse of the standard normal CDF for p in (0, 1). Acklam's rational
/// approximation followed by one Halley step; absolute error below 1e-12
/// over (1e-300, 1 - 1e-16).
double normal_quantile(double p);

/// Upper alpha/2 quantile of the standard normal.
double normal_upper_quantile(double alpha);

}  // namespace stratadj
