#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "ppde/errors.hpp"
#include "ppde/spectral.hpp"

namespace ppde {

/// A path on the uniform grid 0 = t_0 < ... < t_n = T, one coefficient vector
/// per node.  Node j holds dim_h doubles at values[j*dim_h ...].
struct DiscretePath {
    int dim_h = 1;
    int n_steps = 1;
    double horizon = 1.0;
    std::vector<double> grid;   // n_steps + 1 times, uniform
    std::vector<double> values; // (n_steps + 1) * dim_h, node-major

    DiscretePath() = default;

    DiscretePath(int dim, int steps, double T)
        : dim_h(dim), n_steps(steps), horizon(T),
          grid(static_cast<std::size_t>(steps) + 1),
          values((static_cast<std::size_t>(steps) + 1) * dim, 0.0) {
        if (steps < 1) throw std::invalid_argument("DiscretePath: n_steps must be >= 1");
        if (!(T > 0.0)) throw std::invalid_argument("DiscretePath: horizon must be > 0");
        const double dt = T / steps;
        for (int j = 0; j <= steps; ++j) grid[static_cast<std::size_t>(j)] = j * dt;
        grid.back() = T;
    }

    static DiscretePath constant(int dim, int steps, double T, const HilbertVec& v) {
        DiscretePath p(dim, steps, T);
        for (int j = 0; j <= steps; ++j)
            for (int k = 0; k < dim; ++k) p.at(j, k) = v[k];
        return p;
    }

    int n_nodes() const { return n_steps + 1; }
    double dt() const { return horizon / n_steps; }
    double time_of(int node) const { return grid[static_cast<std::size_t>(node)]; }

    double& at(int node, int mode) {
        return values[static_cast<std::size_t>(node) * dim_h + mode];
    }
    double at(int node, int mode) const {
        return values[static_cast<std::size_t>(node) * dim_h + mode];
    }
    std::span<const double> node(int j) const {
        return {values.data() + static_cast<std::size_t>(j) * dim_h, static_cast<std::size_t>(dim_h)};
    }
    std::span<double> node_mut(int j) {
        return {values.data() + static_cast<std::size_t>(j) * dim_h, static_cast<std::size_t>(dim_h)};
    }

    double node_norm(int j) const {
        double s = 0.0;
        for (double v : node(j)) s += v * v;
        return std::sqrt(s);
    }

    bool same_grid(const DiscretePath& other) const {
        return dim_h == other.dim_h && n_steps == other.n_steps && horizon == other.horizon;
    }

    /// Nearest grid node to t; rejects t outside [0, T].
    int node_at(double t) const {
        if (!(t >= -1e-12 && t <= horizon * (1.0 + 1e-12)))
            throw std::invalid_argument("time outside [0, T]");
        const int j = static_cast<int>(std::llround(t / dt()));
        return std::clamp(j, 0, n_steps);
    }

    /// Grid node for t, rejecting queries that are not on (or within snap
    /// tolerance of) a node.  Evaluation times are never interpolated.
    int node_at_strict(double t) const {
        const int j = node_at(t);
        if (std::abs(t - time_of(j)) > 1e-9 * std::max(1.0, horizon))
            throw std::invalid_argument("time does not coincide with a grid node");
        return j;
    }

    void check_finite() const {
        for (double v : values)
            if (!std::isfinite(v)) throw NumericalError("DiscretePath contains non-finite values");
    }
};

/// Read-only view of a path stopped at a node: reads past the stop node
/// return the frozen value.  This is the only form in which coefficient
/// functionals ever see a path, which makes non-anticipativity structural.
class StoppedPathView {
public:
    StoppedPathView(const DiscretePath& p, int stop_node)
        : path_(&p), stop_node_(std::clamp(stop_node, 0, p.n_steps)) {}

    const DiscretePath& path() const { return *path_; }
    int stop_node() const { return stop_node_; }
    double stop_time() const { return path_->time_of(stop_node_); }
    int dim_h() const { return path_->dim_h; }
    int n_steps() const { return path_->n_steps; }
    double horizon() const { return path_->horizon; }
    double dt() const { return path_->dt(); }
    double time_of(int node) const { return path_->time_of(node); }

    double value(int node, int mode) const {
        return path_->at(std::min(node, stop_node_), mode);
    }
    std::span<const double> node(int j) const { return path_->node(std::min(j, stop_node_)); }

    double node_norm(int j) const { return path_->node_norm(std::min(j, stop_node_)); }

    /// Sup over grid nodes of the H-norm (the tail is frozen, so nodes past
    /// the stop contribute nothing new).
    double sup_norm() const {
        double m = 0.0;
        for (int j = 0; j <= stop_node_; ++j) m = std::max(m, path_->node_norm(j));
        return m;
    }

    /// Trapezoid of coordinate `mode` over [0, stop_time].
    double running_integral(int mode) const {
        const double h = dt();
        double s = 0.0;
        for (int j = 0; j < stop_node_; ++j)
            s += 0.5 * h * (path_->at(j, mode) + path_->at(j + 1, mode));
        return s;
    }

private:
    const DiscretePath* path_;
    int stop_node_;
};

/// The stopping map x -> x_{. ^ t}; t snaps to the nearest grid node.
inline DiscretePath stop_path(const DiscretePath& x, double t) {
    const int j = x.node_at(t);
    DiscretePath out = x;
    for (int l = j + 1; l <= x.n_steps; ++l)
        for (int k = 0; k < x.dim_h; ++k) out.at(l, k) = x.at(j, k);
    return out;
}

/// Sup over grid nodes of the H-norm of the node value.
inline double sup_norm(const DiscretePath& x) {
    double m = 0.0;
    for (int j = 0; j <= x.n_steps; ++j) m = std::max(m, x.node_norm(j));
    return m;
}

/// Pseudometric on Lambda: |t - t'| + sup distance of the stopped paths.
inline double d_infty(double t, const DiscretePath& x, double t2, const DiscretePath& x2) {
    if (!x.same_grid(x2)) throw std::invalid_argument("d_infty: paths must share the grid");
    const int j1 = x.node_at(t);
    const int j2 = x2.node_at(t2);
    double m = 0.0;
    for (int j = 0; j <= x.n_steps; ++j) {
        double s = 0.0;
        for (int k = 0; k < x.dim_h; ++k) {
            const double d = x.at(std::min(j, j1), k) - x2.at(std::min(j, j2), k);
            s += d * d;
        }
        m = std::max(m, std::sqrt(s));
    }
    return std::abs(t - t2) + m;
}

} // namespace ppde
