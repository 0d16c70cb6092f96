#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ppde/control.hpp"
#include "ppde/errors.hpp"
#include "ppde/sde.hpp"
#include "ppde/solver.hpp"
#include "ppde/stopping.hpp"

namespace ppde {

using nlohmann::json;

namespace cfgio {

inline const json& require(const json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key)) throw SchemaError(where + "." + key, "missing field");
    return j.at(key);
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

} // namespace cfgio

/// Builtin coefficient library.  Every name used by a scenario must resolve
/// here; the set spans the closed-form oracles the checks rely on.
namespace builtin {

inline DriftFunctional drift(const json& spec, const SpectralModel& model) {
    const std::string name = cfgio::require(spec, "name", "coefficients.drift").get<std::string>();
    if (name == "zero")
        return {"zero", [](double, const StoppedPathView&, std::span<double>) {}};
    if (name == "constant") {
        auto v = cfgio::require(spec, "vector", "coefficients.drift").get<std::vector<double>>();
        if (static_cast<int>(v.size()) != model.dim_h)
            throw SchemaError("coefficients.drift.vector", "expected dim_h entries");
        return {"constant", [v](double, const StoppedPathView&, std::span<double> out) {
                    for (std::size_t k = 0; k < v.size(); ++k) out[k] = v[k];
                }};
    }
    if (name == "affine_endpoint") {
        auto scale = cfgio::require(spec, "scale", "coefficients.drift").get<std::vector<double>>();
        if (static_cast<int>(scale.size()) != model.dim_h)
            throw SchemaError("coefficients.drift.scale", "expected dim_h entries");
        return {"affine_endpoint", [scale](double, const StoppedPathView& x, std::span<double> out) {
                    for (std::size_t k = 0; k < scale.size(); ++k)
                        out[k] = scale[k] * x.value(x.stop_node(), static_cast<int>(k));
                }};
    }
    if (name == "running_integral") {
        auto scale = cfgio::require(spec, "scale", "coefficients.drift").get<std::vector<double>>();
        return {"running_integral", [scale](double, const StoppedPathView& x, std::span<double> out) {
                    for (std::size_t k = 0; k < scale.size(); ++k)
                        out[k] = scale[k] * x.running_integral(static_cast<int>(k));
                }};
    }
    if (name == "running_sup") {
        auto scale = cfgio::require(spec, "scale", "coefficients.drift").get<std::vector<double>>();
        return {"running_sup", [scale](double, const StoppedPathView& x, std::span<double> out) {
                    const double s = x.sup_norm();
                    for (std::size_t k = 0; k < scale.size(); ++k) out[k] = scale[k] * s;
                }};
    }
    throw SchemaError("coefficients.drift.name", "unknown builtin '" + name + "'");
}

inline DiffusionFunctional diffusion(const json& spec, const SpectralModel& model) {
    const std::string name =
        cfgio::require(spec, "name", "coefficients.diffusion").get<std::string>();
    if (name == "zero")
        return {"zero", [](double, const StoppedPathView&, std::span<double>) {}};
    if (name == "diagonal_constant") {
        auto v = cfgio::require(spec, "values", "coefficients.diffusion").get<std::vector<double>>();
        const int dim_k = model.dim_k;
        return {"diagonal_constant", [v, dim_k](double, const StoppedPathView& x,
                                                std::span<double> out) {
                    const int n = std::min(x.dim_h(), dim_k);
                    for (int i = 0; i < n && i < static_cast<int>(v.size()); ++i)
                        out[static_cast<std::size_t>(i) * dim_k + i] = v[static_cast<std::size_t>(i)];
                }};
    }
    throw SchemaError("coefficients.diffusion.name", "unknown builtin '" + name + "'");
}

inline Nonlinearity nonlinearity(const json& spec) {
    const std::string name =
        cfgio::require(spec, "name", "coefficients.nonlinearity").get<std::string>();
    Nonlinearity F;
    F.name = name;
    if (name == "zero") {
        F.fn = [](double, const StoppedPathView&, double) { return 0.0; };
        F.growth_L = 1.0;
        F.lip_Lhat = cfgio::get_or(spec, "lip", 1e-9);
        F.growth_p = 0.0;
        return F;
    }
    if (name == "constant") {
        const double c = cfgio::require(spec, "value", "coefficients.nonlinearity").get<double>();
        F.fn = [c](double, const StoppedPathView&, double) { return c; };
        F.growth_L = std::abs(c) + 1.0;
        F.lip_Lhat = cfgio::get_or(spec, "lip", 0.1);
        F.growth_p = 0.0;
        return F;
    }
    if (name == "linear_y") {
        const double lam = cfgio::require(spec, "lambda", "coefficients.nonlinearity").get<double>();
        F.fn = [lam](double, const StoppedPathView&, double y) { return lam * y; };
        F.growth_L = std::abs(lam) + 1e-9;
        F.lip_Lhat = std::abs(lam) + 1e-9;
        F.growth_p = 0.0;
        return F;
    }
    if (name == "saturating_y") {
        const double c = cfgio::require(spec, "scale", "coefficients.nonlinearity").get<double>();
        F.fn = [c](double, const StoppedPathView&, double y) { return c * std::tanh(y); };
        F.growth_L = std::abs(c) + 1e-9;
        F.lip_Lhat = std::abs(c) + 1e-9;
        F.growth_p = 0.0;
        return F;
    }
    throw SchemaError("coefficients.nonlinearity.name", "unknown builtin '" + name + "'");
}

inline ScalarFunctional terminal(const json& spec) {
    const std::string name = cfgio::require(spec, "name", "coefficients.terminal").get<std::string>();
    const double scale = cfgio::get_or(spec, "scale", 1.0);
    if (name == "constant") {
        const double v = cfgio::require(spec, "value", "coefficients.terminal").get<double>();
        return {"constant", [v](double, const StoppedPathView&) { return v; }};
    }
    if (name == "endpoint_coord") {
        const int mode = cfgio::get_or(spec, "mode", 0);
        return {"endpoint_coord", [mode, scale](double, const StoppedPathView& x) {
                    return scale * x.value(x.stop_node(), mode);
                }};
    }
    if (name == "integral_coord") {
        const int mode = cfgio::get_or(spec, "mode", 0);
        return {"integral_coord", [mode, scale](double, const StoppedPathView& x) {
                    return scale * x.running_integral(mode);
                }};
    }
    if (name == "sup_norm") {
        return {"sup_norm",
                [scale](double, const StoppedPathView& x) { return scale * x.sup_norm(); }};
    }
    throw SchemaError("coefficients.terminal.name", "unknown builtin '" + name + "'");
}

inline RunningCost running_cost(const json& spec) {
    const std::string name = cfgio::require(spec, "name", "control.running_cost").get<std::string>();
    RunningCost ell;
    ell.name = name;
    ell.growth_N = cfgio::get_or(spec, "growth", 1.0);
    ell.growth_p = cfgio::get_or(spec, "growth_p", 1.0);
    if (name == "zero") {
        ell.fn = [](double, const StoppedPathView&, double) { return 0.0; };
        return ell;
    }
    if (name == "action_abs_cost") {
        const double kappa = cfgio::require(spec, "kappa", "control.running_cost").get<double>();
        ell.fn = [kappa](double, const StoppedPathView&, double a) { return -kappa * std::abs(a); };
        return ell;
    }
    if (name == "coord") {
        const double scale = cfgio::get_or(spec, "scale", 1.0);
        const int mode = cfgio::get_or(spec, "mode", 0);
        ell.fn = [scale, mode](double, const StoppedPathView& x, double) {
            return scale * x.value(x.stop_node(), mode);
        };
        return ell;
    }
    if (name == "action_linear") {
        const double scale = cfgio::get_or(spec, "scale", 1.0);
        ell.fn = [scale](double, const StoppedPathView&, double a) { return scale * a; };
        return ell;
    }
    throw SchemaError("control.running_cost.name", "unknown builtin '" + name + "'");
}

inline ControlledDriftFunctional controlled_drift(const json& spec, const SpectralModel& model) {
    const std::string name = cfgio::require(spec, "name", "control.drift").get<std::string>();
    if (name == "action_direction") {
        const int mode = cfgio::get_or(spec, "mode", 0);
        const double scale = cfgio::get_or(spec, "scale", 1.0);
        if (mode < 0 || mode >= model.dim_h)
            throw SchemaError("control.drift.mode", "outside the state dimension");
        return {"action_direction",
                [mode, scale](double, const StoppedPathView&, double a, std::span<double> out) {
                    out[static_cast<std::size_t>(mode)] = scale * a;
                }};
    }
    if (name == "action_plus_endpoint") {
        const int mode = cfgio::get_or(spec, "mode", 0);
        const double pull = cfgio::get_or(spec, "pull", 0.0);
        return {"action_plus_endpoint",
                [mode, pull](double, const StoppedPathView& x, double a, std::span<double> out) {
                    out[static_cast<std::size_t>(mode)] =
                        a + pull * x.value(x.stop_node(), mode);
                }};
    }
    throw SchemaError("control.drift.name", "unknown builtin '" + name + "'");
}

inline ControlledDiffusionFunctional controlled_diffusion(const json& spec,
                                                          const SpectralModel& model) {
    const std::string name = cfgio::require(spec, "name", "control.diffusion").get<std::string>();
    if (name == "zero")
        return {"zero", [](double, const StoppedPathView&, double, std::span<double>) {}};
    if (name == "diagonal_constant") {
        auto v = cfgio::require(spec, "values", "control.diffusion").get<std::vector<double>>();
        const int dim_k = model.dim_k;
        return {"diagonal_constant",
                [v, dim_k](double, const StoppedPathView& x, double, std::span<double> out) {
                    const int n = std::min(x.dim_h(), dim_k);
                    for (int i = 0; i < n && i < static_cast<int>(v.size()); ++i)
                        out[static_cast<std::size_t>(i) * dim_k + i] = v[static_cast<std::size_t>(i)];
                }};
    }
    throw SchemaError("control.diffusion.name", "unknown builtin '" + name + "'");
}

} // namespace builtin

/// One parsed scenario: the problem instance plus the optional per-stage
/// blocks.  `raw` keeps the exact JSON for reports and replay.
struct Scenario {
    json raw;
    std::string name;
    std::uint64_t seed = 1;
    int n_steps = 64;

    SdeProblem problem; // model + coefficients + initial condition
    Nonlinearity F;
    ScalarFunctional xi;

    struct SimulateBlock {
        std::int64_t n_paths = 10000;
        double moment_p = 2.0;
        bool bernoulli = false;
        std::vector<double> flow_restarts; // times; empty = skip the flow check
    };
    struct SolverBlock {
        SolverConfig config;
        bool run_bsde = true;
        std::int64_t bsde_paths = 20000;
        std::string oracle;      // "", "exp_linear_f"
        std::vector<double> residual_times;
        std::vector<double> residual_s;
        std::int64_t residual_paths = 20000;
    };
    struct VerificationBlock {
        std::vector<double> probe_times;
        std::vector<double> s_offsets;
        std::int64_t mc_paths = 6000;
        double shift_c = 0.1;
        std::vector<int> stability_ns;
        double stability_tol = 0.1;
        int n_probe_paths = 2;
    };
    struct StoppingBlock {
        ScalarFunctional phi;
        double horizon = 1.0;
        std::int64_t n_train = 20000;
        std::int64_t n_eval = 20000;
        bool bernoulli = false;
        double gap_tol = 0.02;
    };
    struct ControlBlock {
        ActionSet actions;
        ControlledDriftFunctional drift;
        ControlledDiffusionFunctional diffusion;
        RunningCost ell;
        bool structure_condition = false;
        ControlledDriftFunctional drift0;
        SearchConfig search;
        std::vector<double> dpp_taus;
        std::vector<double> hjb_probe_times;
        int hjb_horizon_steps = 1;
        std::int64_t n_outer = 300;
    };

    std::optional<SimulateBlock> simulate;
    std::optional<SolverBlock> solver;
    std::optional<VerificationBlock> verification;
    std::optional<StoppingBlock> stopping;
    std::optional<ControlBlock> control;

    ControlledSdeProblem controlled_problem() const {
        if (!control) throw SchemaError("control", "missing block");
        ControlledSdeProblem c;
        c.model = problem.model;
        c.t0 = problem.t0;
        c.init = problem.init;
        c.actions = control->actions;
        c.drift = control->drift;
        c.diffusion = control->diffusion;
        c.structure_condition = control->structure_condition;
        c.drift0 = control->drift0;
        return c;
    }

    static Scenario parse(const json& j);
};

inline Scenario Scenario::parse(const json& j) {
    Scenario sc;
    sc.raw = j;
    sc.name = cfgio::get_or<std::string>(j, "name", "unnamed");
    sc.seed = cfgio::get_or<std::uint64_t>(j, "seed", 1);

    const json& mj = cfgio::require(j, "model", "scenario");
    SpectralModel& m = sc.problem.model;
    m.dim_h = cfgio::require(mj, "dim_h", "model").get<int>();
    m.dim_k = cfgio::require(mj, "dim_k", "model").get<int>();
    if (mj.contains("eigenvalues")) {
        m.eigenvalues = mj.at("eigenvalues").get<std::vector<double>>();
    } else if (mj.contains("eigenvalue_rule")) {
        const json& rule = mj.at("eigenvalue_rule");
        const std::string rn = cfgio::require(rule, "name", "model.eigenvalue_rule").get<std::string>();
        if (rn != "heat") throw SchemaError("model.eigenvalue_rule.name", "unknown rule '" + rn + "'");
        const double scale = cfgio::get_or(rule, "scale", 1.0);
        m.eigenvalues.clear();
        for (int k = 1; k <= m.dim_h; ++k) m.eigenvalues.push_back(-scale * k * k);
    } else {
        throw SchemaError("model.eigenvalues", "missing field");
    }
    m.gamma = cfgio::require(mj, "gamma", "model").get<double>();
    m.lip_b = cfgio::get_or(mj, "lip_b", 1.0);
    m.lip_sigma = cfgio::get_or(mj, "lip_sigma", 1.0);
    m.horizon = cfgio::require(mj, "horizon", "model").get<double>();
    m.validate();
    sc.n_steps = cfgio::require(mj, "n_steps", "model").get<int>();
    if (sc.n_steps < 1) throw SchemaError("model.n_steps", "must be >= 1");

    const json& cj = cfgio::require(j, "coefficients", "scenario");
    sc.problem.drift = builtin::drift(cfgio::require(cj, "drift", "coefficients"), m);
    sc.problem.diffusion = builtin::diffusion(cfgio::require(cj, "diffusion", "coefficients"), m);
    sc.F = builtin::nonlinearity(
        cj.contains("nonlinearity") ? cj.at("nonlinearity") : json{{"name", "zero"}});
    sc.xi = builtin::terminal(cj.contains("terminal") ? cj.at("terminal")
                                                      : json{{"name", "constant"}, {"value", 0.0}});

    const json& ij = cfgio::require(j, "initial", "scenario");
    sc.problem.t0 = cfgio::get_or(ij, "t", 0.0);
    if (ij.contains("value")) {
        auto v = ij.at("value").get<std::vector<double>>();
        if (static_cast<int>(v.size()) != m.dim_h)
            throw SchemaError("initial.value", "expected dim_h entries");
        sc.problem.init =
            DiscretePath::constant(m.dim_h, sc.n_steps, m.horizon, HilbertVec{std::move(v)});
    } else if (ij.contains("path")) {
        auto rows = ij.at("path").get<std::vector<std::vector<double>>>();
        if (static_cast<int>(rows.size()) != sc.n_steps + 1)
            throw SchemaError("initial.path", "expected n_steps + 1 rows");
        sc.problem.init = DiscretePath(m.dim_h, sc.n_steps, m.horizon);
        for (int node = 0; node <= sc.n_steps; ++node) {
            if (static_cast<int>(rows[static_cast<std::size_t>(node)].size()) != m.dim_h)
                throw SchemaError("initial.path", "row " + std::to_string(node) +
                                                      " does not have dim_h entries");
            for (int k = 0; k < m.dim_h; ++k)
                sc.problem.init.at(node, k) = rows[static_cast<std::size_t>(node)][static_cast<std::size_t>(k)];
        }
    } else {
        throw SchemaError("initial.value", "missing field");
    }
    sc.problem.validate();

    if (j.contains("simulate")) {
        const json& b = j.at("simulate");
        SimulateBlock s;
        s.n_paths = cfgio::get_or<std::int64_t>(b, "n_paths", 10000);
        s.moment_p = cfgio::get_or(b, "moment_p", 2.0);
        s.bernoulli = cfgio::get_or(b, "bernoulli", false);
        s.flow_restarts = cfgio::get_or(b, "flow_restarts", std::vector<double>{});
        sc.simulate = s;
    }
    if (j.contains("solver")) {
        const json& b = j.at("solver");
        SolverBlock s;
        s.config.window_safety = cfgio::get_or(b, "window_safety", 0.5);
        if (!(s.config.window_safety > 0.0 && s.config.window_safety < 1.0))
            throw SchemaError("solver.window_safety", "must lie in (0, 1)");
        s.config.tol = cfgio::get_or(b, "tol", 1e-7);
        s.config.max_picard_iters = cfgio::get_or(b, "max_picard_iters", 60);
        s.config.n_train_paths = cfgio::get_or<std::int64_t>(b, "n_train_paths", 20000);
        s.config.n_steps = sc.n_steps;
        s.config.feature_names = cfgio::get_or(b, "features", std::vector<std::string>{});
        s.config.ridge_scale = cfgio::get_or(b, "ridge_scale", 1e-8);
        s.config.seed = derive_seed(sc.seed, 0x5001u);
        s.run_bsde = cfgio::get_or(b, "run_bsde", true);
        s.bsde_paths = cfgio::get_or<std::int64_t>(b, "bsde_paths", 20000);
        s.oracle = cfgio::get_or<std::string>(b, "oracle", "");
        s.residual_times = cfgio::get_or(b, "residual_times", std::vector<double>{0.0});
        s.residual_s = cfgio::get_or(b, "residual_s", std::vector<double>{});
        s.residual_paths = cfgio::get_or<std::int64_t>(b, "residual_paths", 20000);
        sc.solver = s;
    }
    if (j.contains("verification")) {
        const json& b = j.at("verification");
        VerificationBlock v;
        v.probe_times = cfgio::get_or(b, "probe_times", std::vector<double>{0.0});
        v.s_offsets = cfgio::get_or(b, "s_offsets", std::vector<double>{0.5});
        v.mc_paths = cfgio::get_or<std::int64_t>(b, "mc_paths", 6000);
        v.shift_c = cfgio::get_or(b, "shift_c", 0.1);
        v.stability_ns = cfgio::get_or(b, "stability_ns", std::vector<int>{});
        v.stability_tol = cfgio::get_or(b, "stability_tol", 0.1);
        v.n_probe_paths = cfgio::get_or(b, "n_probe_paths", 2);
        sc.verification = v;
    }
    if (j.contains("stopping")) {
        const json& b = j.at("stopping");
        StoppingBlock s;
        s.phi = builtin::terminal(cfgio::require(b, "phi", "stopping"));
        s.horizon = cfgio::get_or(b, "horizon", m.horizon);
        s.n_train = cfgio::get_or<std::int64_t>(b, "n_train", 20000);
        s.n_eval = cfgio::get_or<std::int64_t>(b, "n_eval", 20000);
        s.bernoulli = cfgio::get_or(b, "bernoulli", false);
        s.gap_tol = cfgio::get_or(b, "gap_tol", 0.02);
        sc.stopping = s;
    }
    if (j.contains("control")) {
        const json& b = j.at("control");
        ControlBlock c;
        const json& aj = cfgio::require(b, "actions", "control");
        c.actions.labels = cfgio::require(aj, "labels", "control.actions").get<std::vector<std::string>>();
        c.actions.payloads =
            cfgio::require(aj, "payloads", "control.actions").get<std::vector<double>>();
        if (c.actions.labels.size() != c.actions.payloads.size())
            throw SchemaError("control.actions", "labels and payloads differ in length");
        if (c.actions.payloads.empty())
            throw SchemaError("control.actions.payloads", "must be nonempty");
        c.drift = builtin::controlled_drift(cfgio::require(b, "drift", "control"), m);
        c.diffusion = builtin::controlled_diffusion(cfgio::require(b, "diffusion", "control"), m);
        c.ell = builtin::running_cost(b.contains("running_cost") ? b.at("running_cost")
                                                                 : json{{"name", "zero"}});
        if (b.contains("structure_condition")) {
            const json& sb = b.at("structure_condition");
            c.structure_condition = cfgio::get_or(sb, "declared", true);
            if (sb.contains("b0")) c.drift0 = builtin::controlled_drift(sb.at("b0"), m);
        }
        c.search.n_paths = cfgio::get_or<std::int64_t>(b, "n_paths", 4000);
        c.search.seed = derive_seed(sc.seed, 0x5002u);
        c.search.exhaustive_cap = cfgio::get_or<std::int64_t>(b, "exhaustive_cap", 4096);
        c.search.feedback_candidate = cfgio::get_or(b, "feedback_candidate", false);
        c.dpp_taus = cfgio::get_or(b, "dpp_taus", std::vector<double>{});
        c.hjb_probe_times = cfgio::get_or(b, "hjb_probe_times", std::vector<double>{});
        c.hjb_horizon_steps = cfgio::get_or(b, "hjb_horizon_steps", 1);
        c.n_outer = cfgio::get_or<std::int64_t>(b, "n_outer", 300);
        sc.control = c;
    }
    return sc;
}

} // namespace ppde
