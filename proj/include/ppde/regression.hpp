#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "ppde/errors.hpp"

namespace ppde {

/// Ridge-regularized least squares on the normal equations.  The penalty is
/// ridge_scale * (trace(X'X)/k) on every non-intercept coefficient; column 0
/// is treated as the intercept and left unpenalized so constant targets are
/// fitted exactly.  Rank-degenerate feature maps are a user-input hazard, so
/// a failed factorization reports rather than aborts the process.
class RidgeSolver {
public:
    explicit RidgeSolver(double ridge_scale = 1e-8) : ridge_scale_(ridge_scale) {}

    /// X: n rows of k features, row-major.  Returns k coefficients.
    std::vector<double> fit(std::span<const double> X, std::span<const double> y, int n,
                            int k) const {
        std::vector<double> gram(static_cast<std::size_t>(k) * k, 0.0);
        std::vector<double> rhs(static_cast<std::size_t>(k), 0.0);
        for (int i = 0; i < n; ++i) {
            const double* row = X.data() + static_cast<std::size_t>(i) * k;
            const double yi = y[static_cast<std::size_t>(i)];
            for (int a = 0; a < k; ++a) {
                rhs[static_cast<std::size_t>(a)] += row[a] * yi;
                for (int b = a; b < k; ++b)
                    gram[static_cast<std::size_t>(a) * k + b] += row[a] * row[b];
            }
        }
        for (int a = 0; a < k; ++a)
            for (int b = 0; b < a; ++b)
                gram[static_cast<std::size_t>(a) * k + b] = gram[static_cast<std::size_t>(b) * k + a];

        double trace = 0.0;
        for (int a = 0; a < k; ++a) trace += gram[static_cast<std::size_t>(a) * k + a];
        const double lambda = ridge_scale_ * trace / k;
        for (int a = 1; a < k; ++a) gram[static_cast<std::size_t>(a) * k + a] += lambda;

        return cholesky_solve(gram, rhs, k);
    }

private:
    static std::vector<double> cholesky_solve(std::vector<double> g, std::vector<double> b, int k) {
        // in-place LL' factorization
        for (int j = 0; j < k; ++j) {
            double d = g[static_cast<std::size_t>(j) * k + j];
            for (int p = 0; p < j; ++p) {
                const double l = g[static_cast<std::size_t>(j) * k + p];
                d -= l * l;
            }
            if (!(d > 0.0) || !std::isfinite(d))
                throw NumericalError("regression rank deficiency (pivot " + std::to_string(j) +
                                     " not positive)");
            const double dj = std::sqrt(d);
            g[static_cast<std::size_t>(j) * k + j] = dj;
            for (int i = j + 1; i < k; ++i) {
                double s = g[static_cast<std::size_t>(i) * k + j];
                for (int p = 0; p < j; ++p)
                    s -= g[static_cast<std::size_t>(i) * k + p] * g[static_cast<std::size_t>(j) * k + p];
                g[static_cast<std::size_t>(i) * k + j] = s / dj;
            }
        }
        // forward then backward substitution
        for (int i = 0; i < k; ++i) {
            double s = b[static_cast<std::size_t>(i)];
            for (int p = 0; p < i; ++p) s -= g[static_cast<std::size_t>(i) * k + p] * b[static_cast<std::size_t>(p)];
            b[static_cast<std::size_t>(i)] = s / g[static_cast<std::size_t>(i) * k + i];
        }
        for (int i = k - 1; i >= 0; --i) {
            double s = b[static_cast<std::size_t>(i)];
            for (int p = i + 1; p < k; ++p) s -= g[static_cast<std::size_t>(p) * k + i] * b[static_cast<std::size_t>(p)];
            b[static_cast<std::size_t>(i)] = s / g[static_cast<std::size_t>(i) * k + i];
        }
        return b;
    }

    double ridge_scale_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

} // namespace ppde
