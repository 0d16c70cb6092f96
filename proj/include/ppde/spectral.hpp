#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ppde/errors.hpp"

namespace ppde {

/// Element of the truncated state space, coefficients in the eigenbasis of A.
struct HilbertVec {
    std::vector<double> coords;

    HilbertVec() = default;
    explicit HilbertVec(std::vector<double> c) : coords(std::move(c)) {}
    static HilbertVec zeros(int dim) { return HilbertVec(std::vector<double>(dim, 0.0)); }

    int dim() const { return static_cast<int>(coords.size()); }
    double& operator[](int i) { return coords[static_cast<std::size_t>(i)]; }
    double operator[](int i) const { return coords[static_cast<std::size_t>(i)]; }

    double norm() const {
        double s = 0.0;
        for (double c : coords) s += c * c;
        return std::sqrt(s);
    }
};

/// Linear map from the truncated noise space to the state space, stored
/// row-major in the two eigenbases (rows: state modes, cols: noise modes).
struct OperatorMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> entries; // rows*cols, row-major

    OperatorMatrix() = default;
    OperatorMatrix(int r, int c) : rows(r), cols(c), entries(static_cast<std::size_t>(r) * c, 0.0) {}

    double& at(int i, int j) { return entries[static_cast<std::size_t>(i) * cols + j]; }
    double at(int i, int j) const { return entries[static_cast<std::size_t>(i) * cols + j]; }

    static OperatorMatrix diagonal(int r, int c, std::span<const double> diag) {
        OperatorMatrix m(r, c);
        const int n = std::min(r, c);
        for (int i = 0; i < n; ++i) m.at(i, i) = i < static_cast<int>(diag.size()) ? diag[i] : 0.0;
        return m;
    }
};

/// The problem's spectral truncation: diagonal nonpositive generator, noise
/// dimension, smoothing exponent and the declared coefficient constants.
struct SpectralModel {
    int dim_h = 1;
    int dim_k = 1;
    std::vector<double> eigenvalues; // one per state mode, all <= 0
    double gamma = 0.0;              // smoothing exponent, in [0, 1/2)
    double lip_b = 1.0;              // drift Lipschitz/growth constant M
    double lip_sigma = 1.0;          // diffusion smoothing constant M-hat
    double horizon = 1.0;            // terminal time T

    void validate() const {
        if (dim_h < 1) throw SchemaError("model.dim_h", "must be a positive integer");
        if (dim_k < 1) throw SchemaError("model.dim_k", "must be a positive integer");
        if (static_cast<int>(eigenvalues.size()) != dim_h)
            throw SchemaError("model.eigenvalues", "expected dim_h entries");
        for (double lam : eigenvalues) {
            if (!std::isfinite(lam) || lam > 0.0)
                throw SchemaError("model.eigenvalues", "all eigenvalues must be finite and <= 0");
        }
        if (!(gamma >= 0.0 && gamma < 0.5)) throw SchemaError("model.gamma", "must lie in [0, 1/2)");
        if (!(lip_b > 0.0)) throw SchemaError("model.lip_b", "must be > 0");
        if (!(lip_sigma > 0.0)) throw SchemaError("model.lip_sigma", "must be > 0");
        if (!(horizon > 0.0)) throw SchemaError("model.horizon", "must be > 0");
    }
};

/// Applies e^{sA} to v.  Exact for the diagonal truncation; s = 0 is the
/// identity bit-for-bit.
inline HilbertVec semigroup_apply(const SpectralModel& model, double s, const HilbertVec& v) {
    if (!(s >= 0.0)) throw std::invalid_argument("semigroup_apply: s must be >= 0");
    if (v.dim() != model.dim_h) throw std::invalid_argument("semigroup_apply: dimension mismatch");
    if (s == 0.0) return v;
    HilbertVec out = v;
    for (int k = 0; k < model.dim_h; ++k) out[k] = std::exp(s * model.eigenvalues[k]) * v[k];
    return out;
}

/// In-place semigroup action on a raw coefficient block (used by the stepper).
inline void semigroup_apply_inplace(std::span<const double> eigenvalues, double s,
                                    std::span<double> v) {
    for (std::size_t k = 0; k < v.size(); ++k) v[k] *= std::exp(s * eigenvalues[k]);
}

/// Hilbert-Schmidt norm: sqrt of the sum of squared entries.
inline double hs_norm(const OperatorMatrix& m) {
    double s = 0.0;
    for (double e : m.entries) s += e * e;
    return std::sqrt(s);
}

/// Moment threshold p* = 2 / (1 - 2 gamma) attached to the smoothing exponent.
inline double critical_exponent(double gamma) {
    if (!(gamma >= 0.0 && gamma < 0.5))
        throw std::invalid_argument("critical_exponent: gamma must lie in [0, 1/2)");
    return 2.0 / (1.0 - 2.0 * gamma);
}

} // namespace ppde
