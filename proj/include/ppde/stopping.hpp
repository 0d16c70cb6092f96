#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "ppde/errors.hpp"
#include "ppde/solver.hpp"

namespace ppde {

struct StopConfig {
    std::int64_t n_train = 20000;
    std::int64_t n_eval = 20000;
    std::uint64_t seed = 5;
    std::vector<std::string> feature_names;
    double ridge_scale = 1e-8;
    int workers = 0;
    bool bernoulli = false;
};

/// First-trigger stopping rule: stop at the first node where the immediate
/// payoff is at least the regressed continuation value.  Triggers read only
/// the path stopped at their own node.
struct StoppingRule {
    FeatureMap features;
    int first_node = 0;
    int last_node = 0;
    std::vector<std::vector<double>> cont_coef; // per node in [first, last); empty row = always stop

    bool trigger(int node, std::span<const double> feats, double payoff) const {
        if (node >= last_node) return true;
        const auto& c = cont_coef[static_cast<std::size_t>(node)];
        if (c.empty()) return true;
        return payoff >= dot(c, feats);
    }

    nlohmann::json to_json() const {
        return {{"features", features.groups},
                {"dim_h", features.dim_h},
                {"first_node", first_node},
                {"last_node", last_node},
                {"continuation_coef", cont_coef}};
    }
};

struct ValueEstimate {
    double value = 0.0;   // primary estimate (fresh-seed rule value unless exact)
    double stderr_ = 0.0;
    double low_value = 0.0;  // fresh-seed re-evaluation of the induced rule
    double low_stderr = 0.0;
    double high_value = 0.0; // backward regression value
    double high_stderr = 0.0;
    bool exact = false;
    nlohmann::json snapshot;

    bool bracket_contains(double v, double n_sigma = 3.0) const {
        return v >= low_value - n_sigma * low_stderr - 1e-12 &&
               v <= high_value + n_sigma * high_stderr + 1e-12;
    }
};

/// Optimal stopping of phi(tau ^ s, X^{t,x}) by regression backward
/// induction.  Returns the usual bracket: a high-biased backward value and a
/// low-biased fresh-seed evaluation of the induced rule.
inline std::pair<ValueEstimate, StoppingRule> lsm_stop(const ScalarFunctional& phi,
                                                       const SdeProblem& problem, double t,
                                                       const DiscretePath& x, double s,
                                                       const StopConfig& cfg) {
    const int j_t = x.node_at_strict(t);
    const int j_s = x.node_at_strict(s);
    if (j_s < j_t) throw std::invalid_argument("lsm_stop: horizon before start");

    SdeProblem restarted = problem;
    restarted.t0 = x.time_of(j_t);
    restarted.init = stop_path(x, t);

    const FeatureMap map = FeatureMap::build(cfg.feature_names, problem.model.dim_h);
    const int k = map.count();
    const RidgeSolver ridge(cfg.ridge_scale);
    const auto n = cfg.n_train;

    // training ensemble, simulated once up to the stopping horizon
    std::vector<DiscretePath> paths(static_cast<std::size_t>(n));
    parallel_for(n, resolve_workers(cfg.workers), [&](std::int64_t i) {
        NoiseStream stream{cfg.seed, static_cast<std::uint64_t>(i), cfg.bernoulli};
        paths[static_cast<std::size_t>(i)] = simulate_mild_until(restarted, stream, j_s);
    });

    const int n_nodes = j_s - j_t + 1;
    std::vector<std::vector<double>> phi_feats(static_cast<std::size_t>(n_nodes));
    std::vector<std::vector<double>> payoff(static_cast<std::size_t>(n_nodes));
    for (auto& v : phi_feats) v.assign(static_cast<std::size_t>(n) * k, 0.0);
    for (auto& v : payoff) v.assign(static_cast<std::size_t>(n), 0.0);
    parallel_for(n, resolve_workers(cfg.workers), [&](std::int64_t i) {
        const auto& path = paths[static_cast<std::size_t>(i)];
        FeatureTracker tracker(map, path);
        for (int j = j_t; j <= j_s; ++j) {
            tracker.advance_to(j);
            tracker.write(std::span<double>(
                phi_feats[static_cast<std::size_t>(j - j_t)].data() + static_cast<std::size_t>(i) * k,
                static_cast<std::size_t>(k)));
            payoff[static_cast<std::size_t>(j - j_t)][static_cast<std::size_t>(i)] =
                phi.fn(path.time_of(j), StoppedPathView(path, j));
        }
    });

    StoppingRule rule;
    rule.features = map;
    rule.first_node = j_t;
    rule.last_node = j_s;
    rule.cont_coef.assign(static_cast<std::size_t>(std::max(j_s, 1)), {});

    std::vector<double> v_rule = payoff[static_cast<std::size_t>(n_nodes - 1)]; // realized value
    std::vector<double> v_high = v_rule;                                        // backward DP value
    std::vector<double> root_targets = v_high;
    for (int j = j_s - 1; j >= j_t; --j) {
        const auto& feats = phi_feats[static_cast<std::size_t>(j - j_t)];
        const auto& pay = payoff[static_cast<std::size_t>(j - j_t)];
        std::vector<double> c_rule, c_high;
        try {
            c_rule = ridge.fit(feats, v_rule, static_cast<int>(n), k);
            c_high = ridge.fit(feats, v_high, static_cast<int>(n), k);
        } catch (const NumericalError& e) {
            throw NumericalError(std::string(e.what()) + " at node " + std::to_string(j));
        }
        if (j == j_t) root_targets = v_high;
        for (std::int64_t i = 0; i < n; ++i) {
            std::span<const double> row(feats.data() + static_cast<std::size_t>(i) * k,
                                        static_cast<std::size_t>(k));
            if (pay[static_cast<std::size_t>(i)] >= dot(c_rule, row))
                v_rule[static_cast<std::size_t>(i)] = pay[static_cast<std::size_t>(i)];
            v_high[static_cast<std::size_t>(i)] =
                std::max(pay[static_cast<std::size_t>(i)], dot(c_high, row));
        }
        rule.cont_coef[static_cast<std::size_t>(j)] = std::move(c_rule);
    }

    // after the root step every path shares the start state and v_high
    // collapses; the pre-collapse targets carry the sampling error
    MeanEstimate high = mean_estimate(v_high);
    MeanEstimate root = mean_estimate(root_targets);

    // fresh-seed, low-biased evaluation of the frozen rule
    const std::uint64_t fresh_seed = derive_seed(cfg.seed, 0x10u);
    std::vector<double> low_vals(static_cast<std::size_t>(cfg.n_eval), 0.0);
    parallel_for(cfg.n_eval, resolve_workers(cfg.workers), [&](std::int64_t i) {
        NoiseStream stream{fresh_seed, static_cast<std::uint64_t>(i), cfg.bernoulli};
        const DiscretePath path = simulate_mild_until(restarted, stream, j_s);
        FeatureTracker tracker(map, path);
        std::vector<double> feats(static_cast<std::size_t>(k), 0.0);
        for (int j = j_t; j <= j_s; ++j) {
            tracker.advance_to(j);
            tracker.write(feats);
            const double pay = phi.fn(path.time_of(j), StoppedPathView(path, j));
            if (j == j_s || rule.trigger(j, feats, pay)) {
                low_vals[static_cast<std::size_t>(i)] = pay;
                break;
            }
        }
    });
    MeanEstimate low = mean_estimate(low_vals);

    ValueEstimate est;
    est.low_value = low.value;
    est.low_stderr = low.stderr_;
    est.high_value = std::max(high.value, root.value);
    est.high_stderr = std::max(high.stderr_, root.stderr_);
    est.value = low.value;
    est.stderr_ = low.stderr_;
    est.snapshot = rule.to_json();
    return {est, rule};
}

/// Per-node record from exact tree enumeration: immediate payoff vs the exact
/// continuation value, carrying the stopped path (window process) as state.
struct TreeInfo {
    struct Node {
        int node = 0;
        double payoff = 0.0;
        double continuation = 0.0;
        bool in_continuation_region = false;
    };
    std::vector<Node> nodes;
    std::int64_t node_count = 0;
    double max_supermartingale_violation = 0.0;
    static constexpr std::size_t kMaxRecorded = 200000;
};

inline constexpr int kTreeCapBits = 20;

namespace detail {

struct TreeWalker {
    const ScalarFunctional* phi;
    const SpectralModel* model;
    const DriftFunctional* drift;
    const DiffusionFunctional* diffusion;
    DiscretePath* work;
    int j_horizon;
    double dt;
    TreeInfo* info;
    StepWorkspace ws;

    double value(int j) {
        StoppedPathView view(*work, j);
        const double pay = phi->fn(work->time_of(j), view);
        if (info) ++info->node_count;
        if (j == j_horizon) {
            if (info && info->nodes.size() < TreeInfo::kMaxRecorded)
                info->nodes.push_back({j, pay, pay, false});
            return pay;
        }
        const int dim_k = model->dim_k;
        const int patterns = 1 << dim_k;

        std::fill(ws.drift_buf.begin(), ws.drift_buf.end(), 0.0);
        std::fill(ws.sigma_buf.begin(), ws.sigma_buf.end(), 0.0);
        drift->fn(work->time_of(j), view, ws.drift_buf);
        diffusion->fn(work->time_of(j), view, ws.sigma_buf);
        const std::vector<double> b = ws.drift_buf;
        const std::vector<double> sig = ws.sigma_buf;

        const double root = std::sqrt(dt);
        double mean = 0.0;
        for (int pat = 0; pat < patterns; ++pat) {
            for (int kk = 0; kk < model->dim_h; ++kk) {
                double acc = work->at(j, kk) + b[static_cast<std::size_t>(kk)] * dt;
                for (int m = 0; m < dim_k; ++m) {
                    const double sign = (pat >> m) & 1 ? root : -root;
                    acc += sig[static_cast<std::size_t>(kk) * dim_k + m] * sign;
                }
                work->at(j + 1, kk) =
                    std::exp(dt * model->eigenvalues[static_cast<std::size_t>(kk)]) * acc;
            }
            mean += value(j + 1);
        }
        mean /= patterns;
        const double val = std::max(pay, mean);
        if (info) {
            info->max_supermartingale_violation =
                std::max(info->max_supermartingale_violation, mean - val);
            if (info->nodes.size() < TreeInfo::kMaxRecorded)
                info->nodes.push_back({j, pay, mean, mean > pay});
        }
        return val;
    }
};

} // namespace detail

/// Exhaustive backward induction over the full Bernoulli noise tree.  Exact
/// value of the stopping problem for the +-sqrt(dt) increment law; the tree
/// node state is the entire stopped path.
inline ValueEstimate exact_tree_stop(const ScalarFunctional& phi, const SdeProblem& problem,
                                     double t, const DiscretePath& x, double s,
                                     TreeInfo* info = nullptr) {
    const int j_t = x.node_at_strict(t);
    const int j_s = x.node_at_strict(s);
    const int depth = j_s - j_t;
    if (depth * problem.model.dim_k > kTreeCapBits)
        throw std::invalid_argument("exact_tree_stop: tree exceeds the cap of " +
                                    std::to_string(kTreeCapBits) + " branch bits");

    DiscretePath work = stop_path(x, t);
    detail::TreeWalker walker{&phi,  &problem.model, &problem.drift, &problem.diffusion,
                              &work, j_s,            x.dt(),         info,
                              {}};
    walker.ws.resize(problem.model.dim_h, problem.model.dim_k);

    ValueEstimate est;
    est.value = walker.value(j_t);
    est.exact = true;
    est.snapshot = {{"kind", "exact_tree"}, {"depth", depth}};
    return est;
}

} // namespace ppde
