#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ppde/path.hpp"
#include "ppde/spectral.hpp"

namespace ppde {

/// Non-anticipative functionals of (t, x).  Evaluators are always handed a
/// StoppedPathView whose stop node is the evaluation time, so they cannot
/// read the future; the raw callables below are what gets probed by
/// assert_non_anticipative (with an unstopped view) to catch evaluators that
/// would have read the tail if the framework let them.

/// F/xi-like: (t, x) -> real.
struct ScalarFunctional {
    std::string name;
    std::function<double(double t, const StoppedPathView&)> fn;

    double eval(double t, const DiscretePath& x) const {
        return fn(t, StoppedPathView(x, x.node_at_strict(t)));
    }
    double eval_node(int node, const DiscretePath& x) const {
        return fn(x.time_of(node), StoppedPathView(x, node));
    }
};

/// b-like: (t, x) -> H, written into `out` (dim_h).
struct DriftFunctional {
    std::string name;
    std::function<void(double t, const StoppedPathView&, std::span<double> out)> fn;

    HilbertVec eval(double t, const DiscretePath& x) const {
        HilbertVec out = HilbertVec::zeros(x.dim_h);
        fn(t, StoppedPathView(x, x.node_at_strict(t)), out.coords);
        return out;
    }
};

/// sigma-like: (t, x) -> L(K;H), written into `out` (dim_h x dim_k row-major).
struct DiffusionFunctional {
    std::string name;
    std::function<void(double t, const StoppedPathView&, std::span<double> out)> fn;

    OperatorMatrix eval(double t, const DiscretePath& x, int dim_k) const {
        OperatorMatrix out(x.dim_h, dim_k);
        fn(t, StoppedPathView(x, x.node_at_strict(t)), out.entries);
        return out;
    }
};

/// Controlled coefficients carry the action payload as an extra argument.
struct ControlledDriftFunctional {
    std::string name;
    std::function<void(double t, const StoppedPathView&, double action, std::span<double> out)> fn;
};

struct ControlledDiffusionFunctional {
    std::string name;
    std::function<void(double t, const StoppedPathView&, double action, std::span<double> out)> fn;
};

/// One probe for the non-anticipativity report: a base path, a time, and a
/// copy perturbed strictly after that time.
struct AnticipationProbe {
    double t = 0.0;
    DiscretePath x;
    DiscretePath x_perturbed;

    void validate() const {
        if (!x.same_grid(x_perturbed))
            throw std::invalid_argument("AnticipationProbe: grids must match");
        const int j = x.node_at(t);
        for (int l = 0; l <= j; ++l)
            for (int k = 0; k < x.dim_h; ++k)
                if (x.at(l, k) != x_perturbed.at(l, k))
                    throw std::invalid_argument(
                        "AnticipationProbe: perturbation touches nodes at or before t");
    }
};

struct AnticipationReport {
    struct Row {
        int probe_index;
        double deviation;
        bool ok;
    };
    std::vector<Row> rows;
    bool all_ok = true;
};

// The view abstraction keeps evaluators from seeing past the stop node, but
// StoppedPathView::path() is an escape hatch an evaluator could abuse.  The
// probes below evaluate with the framework's own stopping and flag any
// functional whose value still moves when only the tail is perturbed.
inline AnticipationReport assert_non_anticipative(const ScalarFunctional& f,
                                                  const std::vector<AnticipationProbe>& probes) {
    AnticipationReport report;
    int idx = 0;
    for (const auto& p : probes) {
        p.validate();
        const int node = p.x.node_at(p.t);
        const double a = f.fn(p.t, StoppedPathView(p.x, node));
        const double b = f.fn(p.t, StoppedPathView(p.x_perturbed, node));
        const double dev = std::abs(a - b);
        const bool ok = dev == 0.0;
        report.rows.push_back({idx++, dev, ok});
        report.all_ok = report.all_ok && ok;
    }
    return report;
}

inline AnticipationReport assert_non_anticipative(const DriftFunctional& f,
                                                  const std::vector<AnticipationProbe>& probes) {
    AnticipationReport report;
    int idx = 0;
    for (const auto& p : probes) {
        p.validate();
        const int node = p.x.node_at(p.t);
        std::vector<double> a(static_cast<std::size_t>(p.x.dim_h), 0.0), b = a;
        f.fn(p.t, StoppedPathView(p.x, node), a);
        f.fn(p.t, StoppedPathView(p.x_perturbed, node), b);
        double dev = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) dev = std::max(dev, std::abs(a[k] - b[k]));
        const bool ok = dev == 0.0;
        report.rows.push_back({idx++, dev, ok});
        report.all_ok = report.all_ok && ok;
    }
    return report;
}

inline AnticipationReport assert_non_anticipative(const DiffusionFunctional& f, int dim_k,
                                                  const std::vector<AnticipationProbe>& probes) {
    AnticipationReport report;
    int idx = 0;
    for (const auto& p : probes) {
        p.validate();
        const int node = p.x.node_at(p.t);
        std::vector<double> a(static_cast<std::size_t>(p.x.dim_h) * dim_k, 0.0), b = a;
        f.fn(p.t, StoppedPathView(p.x, node), a);
        f.fn(p.t, StoppedPathView(p.x_perturbed, node), b);
        double dev = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) dev = std::max(dev, std::abs(a[k] - b[k]));
        const bool ok = dev == 0.0;
        report.rows.push_back({idx++, dev, ok});
        report.all_ok = report.all_ok && ok;
    }
    return report;
}

/// Sample-based check of the smoothing bound |e^{sA} sigma(t,x)|_HS <=
/// c * s^{-gamma} (1 + |x|_inf): reports the smallest admissible c over the
/// sample set and flags c > lip_sigma.
struct SmoothingReport {
    struct Row {
        double t;
        double s;
        double hs;      // |e^{sA} sigma(t,x)|_HS
        double c_local; // hs * s^gamma / (1 + |x|_inf)
    };
    std::vector<Row> rows;
    double c_bound = 0.0;
    bool violation = false;
};

inline SmoothingReport check_smoothing(const SpectralModel& model, const DiffusionFunctional& sigma,
                                       const std::vector<std::pair<double, DiscretePath>>& samples,
                                       const std::vector<double>& s_grid) {
    if (samples.empty()) throw std::invalid_argument("check_smoothing: empty sample set");
    for (double s : s_grid)
        if (!(s > 0.0)) throw std::invalid_argument("check_smoothing: s_grid entries must be > 0");

    SmoothingReport report;
    std::vector<double> buf(static_cast<std::size_t>(model.dim_h) * model.dim_k, 0.0);
    for (const auto& [t, x] : samples) {
        const int node = x.node_at(t);
        StoppedPathView view(x, node);
        std::fill(buf.begin(), buf.end(), 0.0);
        sigma.fn(t, view, buf);
        const double growth = 1.0 + view.sup_norm();
        for (double s : s_grid) {
            double acc = 0.0;
            for (int i = 0; i < model.dim_h; ++i) {
                const double scale = std::exp(s * model.eigenvalues[i]);
                for (int j = 0; j < model.dim_k; ++j) {
                    const double e = scale * buf[static_cast<std::size_t>(i) * model.dim_k + j];
                    acc += e * e;
                }
            }
            const double hs = std::sqrt(acc);
            const double c_local = hs * std::pow(s, model.gamma) / growth;
            report.rows.push_back({t, s, hs, c_local});
            report.c_bound = std::max(report.c_bound, c_local);
        }
    }
    report.violation = report.c_bound > model.lip_sigma;
    return report;
}

} // namespace ppde
