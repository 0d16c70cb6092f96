#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

namespace ppde {

/// Running mean / variance accumulator (Welford).
class RunningStats {
public:
    void add(double x) {
        ++n_;
        const double d = x - mean_;
        mean_ += d / static_cast<double>(n_);
        m2_ += d * (x - mean_);
    }

    std::size_t count() const { return n_; }
    double mean() const { return mean_; }

    double variance() const {
        return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0;
    }

    double stderr_of_mean() const {
        return n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
    }

private:
    std::size_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

struct MeanEstimate {
    double value = 0.0;
    double stderr_ = 0.0;
    std::size_t n = 0;

    double z_against(double target) const {
        if (stderr_ <= 0.0) return value == target ? 0.0 : std::copysign(1e30, value - target);
        return (value - target) / stderr_;
    }
};

inline MeanEstimate mean_estimate(const std::vector<double>& xs) {
    RunningStats s;
    for (double x : xs) s.add(x);
    return {s.mean(), s.stderr_of_mean(), s.count()};
}

/// Inverse standard normal CDF.  Acklam's rational approximation followed by
/// one Halley step through std::erfc, giving close to full double accuracy.
inline double inverse_normal_cdf(double p) {
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    // Halley refinement.
    const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    const double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
    x = x - u / (1.0 + x * u / 2.0);
    return x;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Two-sided z threshold equivalent to a per-report 3-sigma budget split
/// evenly over n probes (Bonferroni).
inline double bonferroni_z(std::size_t n_probes, double base_z = 3.0) {
    if (n_probes <= 1) return base_z;
    const double alpha_total = 2.0 * (1.0 - normal_cdf(base_z));
    const double alpha_each = alpha_total / static_cast<double>(n_probes);
    return inverse_normal_cdf(1.0 - alpha_each / 2.0);
}

} // namespace ppde
