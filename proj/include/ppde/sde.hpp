#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ppde/errors.hpp"
#include "ppde/functionals.hpp"
#include "ppde/noise.hpp"
#include "ppde/parallel.hpp"
#include "ppde/path.hpp"
#include "ppde/spectral.hpp"

namespace ppde {

/// The path-dependent SDE to simulate: dX = AX dt + b(t,X)dt + sigma(t,X)dW
/// started from the segment of `init` on [0, t0].
struct SdeProblem {
    SpectralModel model;
    DriftFunctional drift;
    DiffusionFunctional diffusion;
    double t0 = 0.0;
    DiscretePath init;

    int start_node() const { return init.node_at(t0); }

    void validate() const {
        model.validate();
        if (init.dim_h != model.dim_h) throw SchemaError("initial.value", "dimension mismatch");
        if (std::abs(init.horizon - model.horizon) > 1e-12)
            throw SchemaError("initial", "path horizon differs from model horizon");
        init.check_finite();
    }
};

/// Finite action set: display labels plus the numeric payload handed to the
/// controlled coefficients.
struct ActionSet {
    std::vector<std::string> labels;
    std::vector<double> payloads;

    int size() const { return static_cast<int>(payloads.size()); }
};

/// Grid policy; either an action index per node (open loop) or a feedback
/// rule reading the path stopped at the decision node.  The simulator hands
/// the feedback rule the path stopped at node j when choosing the action for
/// the step (t_j, t_{j+1}], so an action can only depend on noise up to step
/// j-1: grid predictability is an interface guarantee, not a convention.
struct ControlPolicy {
    std::vector<int> open_loop;
    std::function<int(int node, const StoppedPathView&)> feedback;

    bool is_feedback() const { return static_cast<bool>(feedback); }

    int action_at(int node, const StoppedPathView& stopped) const {
        if (feedback) return feedback(node, stopped);
        return open_loop[static_cast<std::size_t>(node)];
    }

    static ControlPolicy constant(int action, int n_nodes) {
        ControlPolicy p;
        p.open_loop.assign(static_cast<std::size_t>(n_nodes), action);
        return p;
    }
};

struct ControlledSdeProblem {
    SpectralModel model;
    ControlledDriftFunctional drift;
    ControlledDiffusionFunctional diffusion;
    ActionSet actions;
    double t0 = 0.0;
    DiscretePath init;
    bool structure_condition = false;       // declared: drift = diffusion * drift0
    ControlledDriftFunctional drift0;       // K-valued factor when declared

    int start_node() const { return init.node_at(t0); }

    /// Fixing one action yields an uncontrolled problem.
    SdeProblem frozen(int action_index) const {
        const double a = actions.payloads[static_cast<std::size_t>(action_index)];
        SdeProblem p;
        p.model = model;
        p.t0 = t0;
        p.init = init;
        p.drift = {drift.name + "@" + actions.labels[static_cast<std::size_t>(action_index)],
                   [fn = drift.fn, a](double t, const StoppedPathView& x, std::span<double> out) {
                       fn(t, x, a, out);
                   }};
        p.diffusion = {diffusion.name + "@" + actions.labels[static_cast<std::size_t>(action_index)],
                       [fn = diffusion.fn, a](double t, const StoppedPathView& x,
                                              std::span<double> out) { fn(t, x, a, out); }};
        return p;
    }
};

namespace detail {

struct StepWorkspace {
    std::vector<double> drift_buf;
    std::vector<double> sigma_buf;

    void resize(int dim_h, int dim_k) {
        drift_buf.assign(static_cast<std::size_t>(dim_h), 0.0);
        sigma_buf.assign(static_cast<std::size_t>(dim_h) * dim_k, 0.0);
    }
};

inline void check_step_finite(std::span<const double> buf, const char* what, int step,
                              const std::string& name) {
    for (double v : buf)
        if (!std::isfinite(v))
            throw NumericalError(std::string(what) + " '" + name +
                                 "' returned a non-finite value at step " + std::to_string(step));
}

// One exponential-Euler step from node j to j+1.  Coefficients are evaluated
// on the path stopped at node j; the linear part is applied exactly.
template <typename DriftEval, typename DiffusionEval>
void exp_euler_step(DiscretePath& x, int j, const SpectralModel& model, double dt,
                    const NoiseStream& stream, StepWorkspace& ws, DriftEval&& eval_drift,
                    DiffusionEval&& eval_diffusion) {
    StoppedPathView view(x, j);
    const double tj = x.time_of(j);

    std::fill(ws.drift_buf.begin(), ws.drift_buf.end(), 0.0);
    std::fill(ws.sigma_buf.begin(), ws.sigma_buf.end(), 0.0);
    eval_drift(tj, view, std::span<double>(ws.drift_buf));
    eval_diffusion(tj, view, std::span<double>(ws.sigma_buf));

    for (int k = 0; k < model.dim_h; ++k) {
        double acc = x.at(j, k) + ws.drift_buf[static_cast<std::size_t>(k)] * dt;
        for (int m = 0; m < model.dim_k; ++m) {
            const double s = ws.sigma_buf[static_cast<std::size_t>(k) * model.dim_k + m];
            if (s != 0.0) acc += s * stream.increment(j, m, dt);
        }
        x.at(j + 1, k) = std::exp(dt * model.eigenvalues[static_cast<std::size_t>(k)]) * acc;
    }
}

} // namespace detail

/// Exponential-Euler simulation of the mild solution on the init grid, up to
/// node `last_node`.  Nodes past last_node keep the init values (callers that
/// need a stopped object should view or stop the result).
inline DiscretePath simulate_mild_until(const SdeProblem& problem, const NoiseStream& stream,
                                        int last_node) {
    const SpectralModel& model = problem.model;
    DiscretePath x = problem.init;
    const int j0 = problem.start_node();
    const double dt = x.dt();

    detail::StepWorkspace ws;
    ws.resize(model.dim_h, model.dim_k);
    for (int j = j0; j < last_node; ++j) {
        detail::exp_euler_step(x, j, model, dt, stream, ws,
                               [&](double t, const StoppedPathView& v, std::span<double> out) {
                                   problem.drift.fn(t, v, out);
                                   detail::check_step_finite(out, "drift", j, problem.drift.name);
                               },
                               [&](double t, const StoppedPathView& v, std::span<double> out) {
                                   problem.diffusion.fn(t, v, out);
                                   detail::check_step_finite(out, "diffusion", j,
                                                             problem.diffusion.name);
                               });
    }
    return x;
}

/// Simulates the full path.  n_steps must match the init grid: the grid is
/// part of the problem statement, the argument is a consistency check.
inline DiscretePath simulate_mild(const SdeProblem& problem, int n_steps,
                                  const NoiseStream& stream) {
    if (n_steps != problem.init.n_steps)
        throw std::invalid_argument("simulate_mild: n_steps does not match the init grid");
    return simulate_mild_until(problem, stream, problem.init.n_steps);
}

/// Controlled variant: coefficients take the policy's action payload, chosen
/// from the path stopped at the step's left node.
inline DiscretePath simulate_controlled(const ControlledSdeProblem& problem,
                                        const ControlPolicy& policy, int n_steps,
                                        const NoiseStream& stream) {
    if (n_steps != problem.init.n_steps)
        throw std::invalid_argument("simulate_controlled: n_steps does not match the init grid");
    if (!policy.is_feedback() &&
        static_cast<int>(policy.open_loop.size()) < problem.init.n_nodes())
        throw std::invalid_argument("simulate_controlled: policy not defined on all grid nodes");

    const SpectralModel& model = problem.model;
    DiscretePath x = problem.init;
    const int j0 = problem.start_node();
    const double dt = x.dt();

    detail::StepWorkspace ws;
    ws.resize(model.dim_h, model.dim_k);
    for (int j = j0; j < x.n_steps; ++j) {
        const int ai = policy.action_at(j, StoppedPathView(x, j));
        if (ai < 0 || ai >= problem.actions.size())
            throw NumericalError("policy returned an action outside the action set at node " +
                                 std::to_string(j));
        const double a = problem.actions.payloads[static_cast<std::size_t>(ai)];
        detail::exp_euler_step(x, j, model, dt, stream, ws,
                               [&](double t, const StoppedPathView& v, std::span<double> out) {
                                   problem.drift.fn(t, v, a, out);
                                   detail::check_step_finite(out, "drift", j, problem.drift.name);
                               },
                               [&](double t, const StoppedPathView& v, std::span<double> out) {
                                   problem.diffusion.fn(t, v, a, out);
                                   detail::check_step_finite(out, "diffusion", j,
                                                             problem.diffusion.name);
                               });
    }
    return x;
}

/// Both coefficients of a problem against a tail-perturbation probe suite;
/// drift and diffusion must not read past the stop node.
inline bool coefficients_non_anticipative(const SdeProblem& problem,
                                          const std::vector<AnticipationProbe>& probes) {
    return assert_non_anticipative(problem.drift, probes).all_ok &&
           assert_non_anticipative(problem.diffusion, problem.model.dim_k, probes).all_ok;
}

/// Flow identity check: simulate X^{t,z}, restart from the path stopped at s
/// with the same noise keys, and return the max node-wise H-norm deviation.
/// Exact 0 is the contract for this scheme (the step reads only the stopped
/// path, the current state, and per-step counters).
inline double flow_check(const SdeProblem& problem, double s, int n_steps,
                         const NoiseStream& stream) {
    problem.init.node_at_strict(s); // the restart time must sit on the grid
    const DiscretePath full = simulate_mild(problem, n_steps, stream);

    SdeProblem restarted = problem;
    restarted.t0 = s;
    restarted.init = stop_path(full, s);
    const DiscretePath again = simulate_mild(restarted, n_steps, stream);

    double dev = 0.0;
    for (int j = 0; j <= full.n_steps; ++j) {
        double d2 = 0.0;
        for (int k = 0; k < full.dim_h; ++k) {
            const double d = full.at(j, k) - again.at(j, k);
            d2 += d * d;
        }
        dev = std::max(dev, std::sqrt(d2));
    }
    return dev;
}

/// A seeded bag of simulated paths; any member can be regenerated bit-exactly
/// from (seed, index).
struct PathEnsemble {
    std::vector<DiscretePath> paths;
    std::uint64_t seed = 0;
    bool bernoulli = false;
    double t0 = 0.0;
    double moment_p = 2.0;
    double empirical_moment = 0.0; // mean of sup_norm^p

    std::size_t size() const { return paths.size(); }
};

inline PathEnsemble ensemble_simulate(const SdeProblem& problem, std::int64_t n_paths,
                                      int n_steps, std::uint64_t seed, double moment_p = 2.0,
                                      int workers = 1, bool bernoulli = false) {
    if (n_paths < 1) throw std::invalid_argument("ensemble_simulate: n_paths must be >= 1");
    PathEnsemble ens;
    ens.seed = seed;
    ens.bernoulli = bernoulli;
    ens.t0 = problem.t0;
    ens.moment_p = moment_p;
    ens.paths.resize(static_cast<std::size_t>(n_paths));
    parallel_for(n_paths, resolve_workers(workers), [&](std::int64_t i) {
        NoiseStream stream{seed, static_cast<std::uint64_t>(i), bernoulli};
        ens.paths[static_cast<std::size_t>(i)] = simulate_mild(problem, n_steps, stream);
    });
    double acc = 0.0;
    for (const auto& p : ens.paths) acc += std::pow(sup_norm(p), moment_p);
    ens.empirical_moment = acc / static_cast<double>(n_paths);
    if (!std::isfinite(ens.empirical_moment))
        throw NumericalError("ensemble_simulate: empirical moment is not finite");
    return ens;
}

/// |X^{(n)} - X| in the ensemble p-norm, per approximating problem.  All
/// problems share grid, horizon and noise seed; the curve should fall.
inline std::vector<double> sde_stability_check(const std::vector<SdeProblem>& sequence,
                                               const SdeProblem& limit, std::int64_t n_paths,
                                               std::uint64_t seed, double p = 2.0,
                                               int workers = 1) {
    const int n_steps = limit.init.n_steps;
    const PathEnsemble ref = ensemble_simulate(limit, n_paths, n_steps, seed, p, workers);
    std::vector<double> errors;
    errors.reserve(sequence.size());
    for (const auto& prob : sequence) {
        if (!prob.init.same_grid(limit.init))
            throw std::invalid_argument("sde_stability_check: grids must match");
        const PathEnsemble approx = ensemble_simulate(prob, n_paths, n_steps, seed, p, workers);
        double acc = 0.0;
        for (std::size_t i = 0; i < ref.paths.size(); ++i) {
            double dev = 0.0;
            for (int j = 0; j <= n_steps; ++j) {
                double d2 = 0.0;
                for (int k = 0; k < limit.init.dim_h; ++k) {
                    const double d = approx.paths[i].at(j, k) - ref.paths[i].at(j, k);
                    d2 += d * d;
                }
                dev = std::max(dev, std::sqrt(d2));
            }
            acc += std::pow(dev, p);
        }
        errors.push_back(std::pow(acc / static_cast<double>(ref.paths.size()), 1.0 / p));
    }
    return errors;
}

} // namespace ppde
