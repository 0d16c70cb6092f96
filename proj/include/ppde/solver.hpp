#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "ppde/errors.hpp"
#include "ppde/features.hpp"
#include "ppde/regression.hpp"
#include "ppde/sde.hpp"
#include "ppde/stats.hpp"
#include "ppde/valuefn.hpp"

namespace ppde {

/// The semilinear term F(t, x, y) with its declared constants: L and p bound
/// the growth |F| <= L (1 + |x|_inf^p + |y|), L-hat the Lipschitz modulus in y.
struct Nonlinearity {
    std::string name;
    std::function<double(double t, const StoppedPathView&, double y)> fn;
    double growth_L = 1.0;
    double lip_Lhat = 1.0;
    double growth_p = 0.0;
};

/// One probe for the declared-constant spot checks: evaluate F at (t, x) for
/// the pair y, y2.
struct NonlinearityProbe {
    double t = 0.0;
    DiscretePath x;
    double y = 0.0;
    double y2 = 0.0;
};

struct NonlinearityCheck {
    bool lipschitz_ok = true; // |F(t,x,y) - F(t,x,y')| <= Lhat |y - y'|
    bool growth_ok = true;    // |F(t,x,y)| <= L (1 + |x|_inf^p + |y|)
    double worst_lipschitz_excess = 0.0;
    double worst_growth_excess = 0.0;
};

/// Samples the declared Lipschitz and growth bounds.  The bounds are
/// universally quantified statements, so this is a spot check of the
/// declaration, not a proof.
inline NonlinearityCheck check_nonlinearity(const Nonlinearity& F,
                                            const std::vector<NonlinearityProbe>& probes) {
    NonlinearityCheck out;
    for (const auto& p : probes) {
        const int node = p.x.node_at(p.t);
        StoppedPathView view(p.x, node);
        const double fa = F.fn(p.t, view, p.y);
        const double fb = F.fn(p.t, view, p.y2);
        const double lip_excess = std::abs(fa - fb) - F.lip_Lhat * std::abs(p.y - p.y2);
        out.worst_lipschitz_excess = std::max(out.worst_lipschitz_excess, lip_excess);
        const double bound =
            F.growth_L * (1.0 + std::pow(view.sup_norm(), F.growth_p) + std::abs(p.y));
        const double growth_excess = std::abs(fa) - bound;
        out.worst_growth_excess = std::max(out.worst_growth_excess, growth_excess);
    }
    out.lipschitz_ok = out.worst_lipschitz_excess <= 1e-12;
    out.growth_ok = out.worst_growth_excess <= 1e-12;
    return out;
}

struct SolverConfig {
    double window_safety = 0.5; // fraction of the contraction bound 1/(Lhat(1+M))
    double tol = 1e-7;          // sup change over training data
    int max_picard_iters = 60;
    std::int64_t n_train_paths = 20000;
    int n_steps = 64;
    std::vector<std::string> feature_names; // empty -> default set
    double ridge_scale = 1e-8;
    std::uint64_t seed = 1;
    int workers = 0;
};

struct McConfig {
    std::int64_t n_paths = 20000;
    std::uint64_t seed = 2;
    int workers = 0;
};

struct PicardDiagnostics {
    struct Window {
        int first_node = 0;
        int last_node = 0;
        double length = 0.0;
        int iterations = 0;
        std::vector<double> changes;
        std::vector<double> ratios;
        double contraction_bound = 0.0; // length * Lhat * (1 + M)
    };
    std::vector<Window> windows;
    double terminal_fit_residual = 0.0;
};

namespace detail {

/// Training data shared by the regression solvers: simulated ensemble plus
/// the feature tensor (per node, n_paths x k row-major).
struct TrainingSet {
    PathEnsemble ens;
    FeatureMap features;
    int k = 0;
    std::vector<std::vector<double>> phi; // [node][path*k]

    static TrainingSet build(const SdeProblem& problem, const FeatureMap& map,
                             std::int64_t n_paths, std::uint64_t seed, int workers,
                             bool bernoulli = false) {
        TrainingSet ts;
        ts.features = map;
        ts.k = map.count();
        ts.ens = ensemble_simulate(problem, n_paths, problem.init.n_steps, seed, 2.0, workers,
                                   bernoulli);
        const int n_nodes = problem.init.n_nodes();
        ts.phi.assign(static_cast<std::size_t>(n_nodes),
                      std::vector<double>(static_cast<std::size_t>(n_paths) * ts.k, 0.0));
        parallel_for(n_paths, resolve_workers(workers), [&](std::int64_t i) {
            FeatureTracker tracker(ts.features, ts.ens.paths[static_cast<std::size_t>(i)]);
            for (int j = 0; j < n_nodes; ++j) {
                tracker.advance_to(j);
                tracker.write(std::span<double>(
                    ts.phi[static_cast<std::size_t>(j)].data() + static_cast<std::size_t>(i) * ts.k,
                    static_cast<std::size_t>(ts.k)));
            }
        });
        return ts;
    }

    std::span<const double> row(int node, std::int64_t path) const {
        return {phi[static_cast<std::size_t>(node)].data() + static_cast<std::size_t>(path) * k,
                static_cast<std::size_t>(k)};
    }
};

} // namespace detail

/// Solves the terminal-value problem for u by the windowed fixed-point
/// construction: [0,T] is cut into spans short enough that the map
///   u -> E[ zeta(X) + integral F(s, X, u(s, X)) ds ]
/// contracts, each window is iterated to tolerance over a training ensemble
/// (regressing the Monte Carlo functional on the feature map), and windows
/// are concatenated backward from the terminal condition.
inline ValueFunctional picard_solve(const SdeProblem& problem, const Nonlinearity& F,
                                    const ScalarFunctional& xi, const SolverConfig& cfg,
                                    PicardDiagnostics* diag = nullptr) {
    problem.validate();
    if (cfg.n_steps != problem.init.n_steps)
        throw SchemaError("solver.n_steps", "does not match the scenario grid");

    const int n = problem.init.n_steps;
    const int j0 = problem.start_node();
    const double dt = problem.init.dt();
    const auto n_paths = cfg.n_train_paths;

    const FeatureMap map = FeatureMap::build(cfg.feature_names, problem.model.dim_h);
    const auto ts = detail::TrainingSet::build(problem, map, n_paths, cfg.seed, cfg.workers);
    const RidgeSolver ridge(cfg.ridge_scale);
    const int k = ts.k;

    ValueFunctional u;
    u.features = map;
    u.n_steps = n;
    u.horizon = problem.init.horizon;
    u.coef.assign(static_cast<std::size_t>(n) + 1, std::vector<double>());

    // terminal condition: per-path values are exact, the node-n regression is
    // the functional representation
    std::vector<double> xi_vals(static_cast<std::size_t>(n_paths), 0.0);
    for (std::int64_t i = 0; i < n_paths; ++i)
        xi_vals[static_cast<std::size_t>(i)] =
            xi.eval_node(n, ts.ens.paths[static_cast<std::size_t>(i)]);
    try {
        u.coef[static_cast<std::size_t>(n)] = ridge.fit(ts.phi[static_cast<std::size_t>(n)],
                                                        xi_vals, static_cast<int>(n_paths), k);
    } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) + " at node " + std::to_string(n));
    }
    double term_res = 0.0;
    for (std::int64_t i = 0; i < n_paths; ++i)
        term_res = std::max(term_res, std::abs(dot(ts.row(n, i), u.coef[static_cast<std::size_t>(n)]) -
                                               xi_vals[static_cast<std::size_t>(i)]));
    if (diag) diag->terminal_fit_residual = term_res;

    // window span from the contraction bound, with the configured safety factor
    const double lip = F.lip_Lhat * (1.0 + problem.model.lip_b);
    const double eps = lip > 0.0 ? cfg.window_safety / lip : problem.init.horizon;
    const int span = std::max(1, static_cast<int>(std::floor(eps / dt + 1e-12)));

    // uvals[j][i]: current iterate of u(t_j, X_i) on training paths
    std::vector<std::vector<double>> uvals(static_cast<std::size_t>(n) + 1);
    uvals[static_cast<std::size_t>(n)] = xi_vals;

    std::vector<double> target(static_cast<std::size_t>(n_paths), 0.0);
    std::vector<double> fvals; // F at (node, path) for the active window, node-major
    int j_hi = n;
    while (j_hi > j0) {
        const int j_lo = std::max(j0, j_hi - span);
        const int w_nodes = j_hi - j_lo;

        PicardDiagnostics::Window wdiag;
        wdiag.first_node = j_lo;
        wdiag.last_node = j_hi;
        wdiag.length = w_nodes * dt;
        wdiag.contraction_bound = wdiag.length * lip;

        // iterate 0: regression of the window edge value alone
        for (int j = j_lo; j < j_hi; ++j) {
            try {
                u.coef[static_cast<std::size_t>(j)] =
                    ridge.fit(ts.phi[static_cast<std::size_t>(j)], uvals[static_cast<std::size_t>(j_hi)],
                              static_cast<int>(n_paths), k);
            } catch (const NumericalError& e) {
                throw NumericalError(std::string(e.what()) + " at node " + std::to_string(j));
            }
            auto& uj = uvals[static_cast<std::size_t>(j)];
            uj.assign(static_cast<std::size_t>(n_paths), 0.0);
            for (std::int64_t i = 0; i < n_paths; ++i)
                uj[static_cast<std::size_t>(i)] = dot(ts.row(j, i), u.coef[static_cast<std::size_t>(j)]);
        }

        fvals.assign(static_cast<std::size_t>(w_nodes + 1) * n_paths, 0.0);
        double prev_change = std::numeric_limits<double>::quiet_NaN();
        int stalled = 0;
        for (int iter = 1; iter <= cfg.max_picard_iters; ++iter) {
            // F along the window under the current iterate
            parallel_for(n_paths, resolve_workers(cfg.workers), [&](std::int64_t i) {
                const auto& path = ts.ens.paths[static_cast<std::size_t>(i)];
                for (int j = j_lo; j <= j_hi; ++j) {
                    const double y = uvals[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
                    fvals[static_cast<std::size_t>(j - j_lo) * n_paths + i] =
                        F.fn(path.time_of(j), StoppedPathView(path, j), y);
                }
            });

            double change = 0.0;
            // backward trapezoid suffix of F gives the integral in the target
            std::vector<double> suffix(static_cast<std::size_t>(n_paths), 0.0);
            for (int j = j_hi - 1; j >= j_lo; --j) {
                for (std::int64_t i = 0; i < n_paths; ++i) {
                    const double fa = fvals[static_cast<std::size_t>(j - j_lo) * n_paths + i];
                    const double fb = fvals[static_cast<std::size_t>(j + 1 - j_lo) * n_paths + i];
                    suffix[static_cast<std::size_t>(i)] += 0.5 * dt * (fa + fb);
                    target[static_cast<std::size_t>(i)] =
                        uvals[static_cast<std::size_t>(j_hi)][static_cast<std::size_t>(i)] +
                        suffix[static_cast<std::size_t>(i)];
                }
                std::vector<double> cj;
                try {
                    cj = ridge.fit(ts.phi[static_cast<std::size_t>(j)], target,
                                   static_cast<int>(n_paths), k);
                } catch (const NumericalError& e) {
                    throw NumericalError(std::string(e.what()) + " at node " + std::to_string(j));
                }
                auto& uj = uvals[static_cast<std::size_t>(j)];
                for (std::int64_t i = 0; i < n_paths; ++i) {
                    const double v = dot(ts.row(j, i), cj);
                    change = std::max(change, std::abs(v - uj[static_cast<std::size_t>(i)]));
                    uj[static_cast<std::size_t>(i)] = v;
                }
                u.coef[static_cast<std::size_t>(j)] = std::move(cj);
            }

            wdiag.changes.push_back(change);
            wdiag.iterations = iter;
            if (std::isfinite(prev_change) && prev_change > 1e3 * cfg.tol) {
                const double ratio = change / prev_change;
                wdiag.ratios.push_back(ratio);
                stalled = ratio >= 1.0 ? stalled + 1 : 0;
                if (stalled >= 3)
                    throw NumericalError(
                        "fixed-point iteration is not contracting on window [" +
                        std::to_string(j_lo) + "," + std::to_string(j_hi) + "]: change ratio " +
                        std::to_string(ratio) + " after " + std::to_string(iter) + " iterations");
            }
            prev_change = change;
            if (change < cfg.tol) break;
            if (iter == cfg.max_picard_iters)
                throw NumericalError("window [" + std::to_string(j_lo) + "," +
                                     std::to_string(j_hi) + "] did not reach tol " +
                                     std::to_string(cfg.tol) + "; last change " +
                                     std::to_string(change));
        }

        if (diag) diag->windows.push_back(std::move(wdiag));
        j_hi = j_lo;
    }

    // nodes before the initial time carry the first trained node's
    // coefficients; only t >= t0 is informed by data
    for (int j = 0; j < j0; ++j) u.coef[static_cast<std::size_t>(j)] = u.coef[static_cast<std::size_t>(j0)];
    return u;
}

struct DriftEstimate {
    double drift = 0.0;
    double stderr_ = 0.0;
    std::size_t n = 0;

    double z() const {
        if (stderr_ > 0.0) return drift / stderr_;
        return drift == 0.0 ? 0.0 : std::copysign(1e30, drift);
    }
};

/// Monte Carlo estimate of E[ u(s, X^{t,x}) + int_t^s F(r, X, u(r, X)) dr ]
/// - u(t, x) under fresh noise.  F may be null (pure expectation drift).
/// The integral uses the trapezoid rule on grid nodes, matching the solver.
inline DriftEstimate estimate_value_drift(const FeatureMap& features, const NodeValue& u,
                                          const SdeProblem& problem, const Nonlinearity* F,
                                          double t, const DiscretePath& x, double s,
                                          const McConfig& mc) {
    const int j_t = x.node_at_strict(t);
    const int j_s = x.node_at_strict(s);
    if (j_s < j_t) throw std::invalid_argument("estimate_value_drift: s must be >= t");

    SdeProblem restarted = problem;
    restarted.t0 = x.time_of(j_t);
    restarted.init = stop_path(x, t);

    const int k = features.count();
    std::vector<double> base_feats(static_cast<std::size_t>(k), 0.0);
    {
        FeatureTracker tracker(features, restarted.init);
        tracker.advance_to(j_t);
        tracker.write(base_feats);
    }
    const double base = u(j_t, base_feats, StoppedPathView(restarted.init, j_t));
    if (j_s == j_t) return {0.0, 0.0, static_cast<std::size_t>(mc.n_paths)};

    const int workers = resolve_workers(mc.workers);
    std::vector<double> vals(static_cast<std::size_t>(mc.n_paths), 0.0);
    parallel_for(mc.n_paths, workers, [&](std::int64_t i) {
        NoiseStream stream{mc.seed, static_cast<std::uint64_t>(i)};
        const DiscretePath path = simulate_mild_until(restarted, stream, j_s);
        FeatureTracker tracker(features, path);
        std::vector<double> feats(static_cast<std::size_t>(k), 0.0);
        double integral = 0.0;
        double f_prev = 0.0;
        double u_s = 0.0;
        for (int j = j_t; j <= j_s; ++j) {
            tracker.advance_to(j);
            tracker.write(feats);
            StoppedPathView view(path, j);
            const double uj = u(j, feats, view);
            if (j == j_s) u_s = uj;
            if (F) {
                const double fj = F->fn(path.time_of(j), view, uj);
                if (j > j_t) integral += 0.5 * path.dt() * (f_prev + fj);
                f_prev = fj;
            }
        }
        vals[static_cast<std::size_t>(i)] = u_s + integral - base;
    });

    RunningStats stats;
    for (double v : vals) stats.add(v);
    return {stats.mean(), stats.stderr_of_mean(), stats.count()};
}

struct ResidualRow {
    double t = 0.0;
    double s = 0.0;
    double residual = 0.0;
    double stderr_ = 0.0;
    double z = 0.0;
};

/// Fixed-point residual of a fitted functional at test points: zero within
/// noise at every intermediate s if and only if u solves the equation.
inline std::vector<ResidualRow> mild_residual(const ValueFunctional& u, const SdeProblem& problem,
                                              const Nonlinearity& F,
                                              const std::vector<std::pair<double, DiscretePath>>& test_points,
                                              const std::vector<double>& s_choices,
                                              const McConfig& mc) {
    std::vector<ResidualRow> rows;
    const NodeValue uv = u.node_value();
    for (const auto& [t, x] : test_points) {
        for (double s : s_choices) {
            if (s < t) continue;
            const auto est = estimate_value_drift(u.features, uv, problem, &F, t, x, s, mc);
            rows.push_back({t, s, est.drift, est.stderr_, est.z()});
        }
    }
    return rows;
}

/// Single-pass Monte Carlo for the linear case (F reads only (t, x)):
/// E[ xi(X^{t,x}) + int_t^T F(s, X) ds ].
inline MeanEstimate feynman_kac_linear(const SdeProblem& problem, const ScalarFunctional& F_tx,
                                       const ScalarFunctional& xi, double t, const DiscretePath& x,
                                       const McConfig& mc) {
    const int j_t = x.node_at_strict(t);
    const int n = x.n_steps;

    SdeProblem restarted = problem;
    restarted.t0 = x.time_of(j_t);
    restarted.init = stop_path(x, t);

    std::vector<double> vals(static_cast<std::size_t>(mc.n_paths), 0.0);
    parallel_for(mc.n_paths, resolve_workers(mc.workers), [&](std::int64_t i) {
        NoiseStream stream{mc.seed, static_cast<std::uint64_t>(i)};
        const DiscretePath path = simulate_mild_until(restarted, stream, n);
        double integral = 0.0;
        double f_prev = 0.0;
        for (int j = j_t; j <= n; ++j) {
            const double fj = F_tx.fn(path.time_of(j), StoppedPathView(path, j));
            if (j > j_t) integral += 0.5 * path.dt() * (f_prev + fj);
            f_prev = fj;
        }
        vals[static_cast<std::size_t>(i)] = xi.eval_node(n, path) + integral;
    });
    return mean_estimate(vals);
}

/// Per-node regression representation of the backward pair (Y, Z).
struct BsdeState {
    FeatureMap features;
    int n_steps = 1;
    double horizon = 1.0;
    std::vector<std::vector<double>> y_coef;              // per node
    std::vector<std::vector<std::vector<double>>> z_coef; // per node, per noise mode
    std::vector<double> terminal_y;                       // per training path, equals xi exactly
};

struct BsdeConfig {
    std::int64_t n_paths = 20000;
    int n_steps = 64;
    std::uint64_t seed = 3;
    std::vector<std::string> feature_names;
    double ridge_scale = 1e-8;
    int workers = 0;
};

struct BsdeResult {
    double y0 = 0.0;
    double stderr_ = 0.0;
    BsdeState state;
};

/// Backward Euler on the BSDE driven by the simulated forward ensemble:
/// terminal Y is xi path by path, each step regresses
/// Y_{j+1} + F(t_j, X, Y_{j+1}) dt onto the node-j features, and Z comes from
/// the covariation regression of Y_{j+1} dW_j / dt.
inline BsdeResult bsde_solve(const SdeProblem& problem, const Nonlinearity& F,
                             const ScalarFunctional& xi, double t, const DiscretePath& x,
                             const BsdeConfig& cfg) {
    if (cfg.n_steps != x.n_steps)
        throw SchemaError("bsde.n_steps", "does not match the path grid");
    const int j_t = x.node_at_strict(t);
    const int n = x.n_steps;
    const double dt = x.dt();

    SdeProblem restarted = problem;
    restarted.t0 = x.time_of(j_t);
    restarted.init = stop_path(x, t);

    const FeatureMap map = FeatureMap::build(cfg.feature_names, problem.model.dim_h);
    const auto ts = detail::TrainingSet::build(restarted, map, cfg.n_paths, cfg.seed, cfg.workers);
    const RidgeSolver ridge(cfg.ridge_scale);
    const int k = ts.k;
    const int dim_k = problem.model.dim_k;
    const auto n_paths = cfg.n_paths;

    BsdeResult out;
    out.state.features = map;
    out.state.n_steps = n;
    out.state.horizon = x.horizon;
    out.state.y_coef.assign(static_cast<std::size_t>(n) + 1, {});
    out.state.z_coef.assign(static_cast<std::size_t>(n) + 1, {});

    std::vector<double> y(static_cast<std::size_t>(n_paths), 0.0);
    for (std::int64_t i = 0; i < n_paths; ++i)
        y[static_cast<std::size_t>(i)] = xi.eval_node(n, ts.ens.paths[static_cast<std::size_t>(i)]);
    out.state.terminal_y = y;
    out.state.y_coef[static_cast<std::size_t>(n)] =
        ridge.fit(ts.phi[static_cast<std::size_t>(n)], y, static_cast<int>(n_paths), k);

    std::vector<double> target(static_cast<std::size_t>(n_paths), 0.0);
    std::vector<double> ztarget(static_cast<std::size_t>(n_paths), 0.0);
    double last_stderr = 0.0;
    for (int j = n - 1; j >= j_t; --j) {
        for (std::int64_t i = 0; i < n_paths; ++i) {
            const auto& path = ts.ens.paths[static_cast<std::size_t>(i)];
            const double yi = y[static_cast<std::size_t>(i)];
            target[static_cast<std::size_t>(i)] =
                yi + F.fn(path.time_of(j), StoppedPathView(path, j), yi) * dt;
        }
        std::vector<double> cj;
        try {
            cj = ridge.fit(ts.phi[static_cast<std::size_t>(j)], target, static_cast<int>(n_paths), k);
        } catch (const NumericalError& e) {
            throw NumericalError(std::string(e.what()) + " at node " + std::to_string(j));
        }

        auto& zrow = out.state.z_coef[static_cast<std::size_t>(j)];
        zrow.resize(static_cast<std::size_t>(dim_k));
        for (int m = 0; m < dim_k; ++m) {
            for (std::int64_t i = 0; i < n_paths; ++i) {
                NoiseStream stream{cfg.seed, static_cast<std::uint64_t>(i)};
                ztarget[static_cast<std::size_t>(i)] =
                    y[static_cast<std::size_t>(i)] * stream.increment(j, m, dt) / dt;
            }
            zrow[static_cast<std::size_t>(m)] =
                ridge.fit(ts.phi[static_cast<std::size_t>(j)], ztarget, static_cast<int>(n_paths), k);
        }

        RunningStats sres;
        for (std::int64_t i = 0; i < n_paths; ++i) {
            const double v = dot(ts.row(j, i), cj);
            sres.add(target[static_cast<std::size_t>(i)]);
            y[static_cast<std::size_t>(i)] = v;
        }
        last_stderr = sres.stderr_of_mean();
        out.state.y_coef[static_cast<std::size_t>(j)] = std::move(cj);
    }
    for (int j = 0; j < j_t; ++j) out.state.y_coef[static_cast<std::size_t>(j)] = out.state.y_coef[static_cast<std::size_t>(j_t)];

    std::vector<double> feats(static_cast<std::size_t>(k), 0.0);
    FeatureTracker tracker(map, restarted.init);
    tracker.advance_to(j_t);
    tracker.write(feats);
    out.y0 = dot(out.state.y_coef[static_cast<std::size_t>(j_t)], feats);
    out.stderr_ = last_stderr;
    return out;
}

} // namespace ppde
