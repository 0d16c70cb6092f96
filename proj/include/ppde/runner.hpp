#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ppde/io.hpp"
#include "ppde/scenario.hpp"
#include "ppde/viscosity.hpp"

namespace ppde {

struct CheckResult {
    std::string name;
    bool pass = true;
    double value = 0.0;
    double stderr_ = 0.0; // 0 with exact=true means the value carries no MC error
    bool exact = false;
    std::string note;

    json to_json() const {
        return {{"name", name}, {"pass", pass},   {"value", value},
                {"stderr", stderr_}, {"exact", exact}, {"note", note}};
    }
};

struct RunReport {
    json scenario;
    std::string digest;
    std::vector<std::string> stages;
    std::vector<CheckResult> checks;
    std::vector<std::string> tables;
    std::map<std::string, double> timings_sec;
    int workers = 1;
    bool all_pass = true;

    json results_json() const {
        json arr = json::array();
        for (const auto& c : checks) arr.push_back(c.to_json());
        return arr;
    }

    json to_json() const {
        json t;
        for (const auto& [k, v] : timings_sec) t[k] = v;
        return {{"scenario", scenario}, {"digest", digest},   {"stages", stages},
                {"results", results_json()}, {"tables", tables}, {"timings_sec", t},
                {"workers", workers},        {"all_pass", all_pass}};
    }
};

namespace detail {

inline std::string fnv1a_hex(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& file, const std::vector<std::string>& header)
        : out_(file, std::ios::trunc) {
        if (!out_) throw NumericalError("cannot open " + file.string());
        for (std::size_t i = 0; i < header.size(); ++i)
            out_ << (i ? "," : "") << header[i];
        out_ << "\n";
    }
    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
        out_ << "\n";
    }

private:
    std::ofstream out_;
};

inline void write_martingale_csv(const std::filesystem::path& file, const MartingaleReport& rep) {
    CsvWriter csv(file, {"t", "s", "drift", "stderr", "z", "verdict"});
    for (const auto& r : rep.rows)
        csv.row({fmt(r.t), fmt(r.s), fmt(r.drift), fmt(r.stderr_), fmt(r.z),
                 r.pass ? "pass" : "fail"});
}

} // namespace detail

/// Executes the requested stages of a scenario, writing artifacts atomically
/// into out_dir.  Stage names: simulate, solve, verify, stop, control.
class ScenarioRunner {
public:
    ScenarioRunner(Scenario sc, std::filesystem::path out_dir, int workers)
        : sc_(std::move(sc)), out_(std::move(out_dir)), workers_(resolve_workers(workers)) {
        std::filesystem::create_directories(out_);
    }

    RunReport run(const std::vector<std::string>& stages) {
        report_.scenario = sc_.raw;
        report_.digest = detail::fnv1a_hex(sc_.raw.dump());
        report_.stages = stages;
        report_.workers = workers_;
        for (const auto& stage : stages) {
            const auto start = std::chrono::steady_clock::now();
            if (stage == "simulate") run_simulate();
            else if (stage == "solve") run_solve();
            else if (stage == "verify") run_verify();
            else if (stage == "stop") run_stop();
            else if (stage == "control") run_control();
            else throw SchemaError("subcommand", "unknown stage '" + stage + "'");
            report_.timings_sec[stage] =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        }
        for (const auto& c : report_.checks) report_.all_pass = report_.all_pass && c.pass;
        write_report();
        return report_;
    }

    const RunReport& report() const { return report_; }

private:
    void add_check(CheckResult c) { report_.checks.push_back(std::move(c)); }

    void write_report() {
        std::ofstream out(out_ / "report.json", std::ios::trunc);
        out << report_.to_json().dump(2) << "\n";
        if (!out) throw NumericalError("cannot write report.json");
    }

    void run_simulate() {
        if (!sc_.simulate) throw SchemaError("simulate", "missing block");
        const auto& blk = *sc_.simulate;
        const auto ens = ensemble_simulate(sc_.problem, blk.n_paths, sc_.n_steps,
                                           derive_seed(sc_.seed, 0x1001u), blk.moment_p, workers_,
                                           blk.bernoulli);
        write_ensemble((out_ / "ensemble.bin").string(), ens);
        report_.tables.push_back("ensemble.bin");

        RunningStats sup_stats;
        for (const auto& p : ens.paths) sup_stats.add(std::pow(sup_norm(p), blk.moment_p));
        add_check({"moment_p_finite", std::isfinite(ens.empirical_moment), ens.empirical_moment,
                   sup_stats.stderr_of_mean(), false,
                   "empirical E[sup|X|^p], p = " + detail::fmt(blk.moment_p)});

        if (!blk.flow_restarts.empty()) {
            double worst = 0.0;
            for (double s : blk.flow_restarts)
                for (std::uint64_t pi = 0; pi < 3; ++pi)
                    worst = std::max(worst, flow_check(sc_.problem, s, sc_.n_steps,
                                                       NoiseStream{derive_seed(sc_.seed, 0x1002u),
                                                                   pi, blk.bernoulli}));
            add_check({"flow_identity", worst == 0.0, worst, 0.0, true,
                       "max node deviation after restart from the stopped path"});
        }

        detail::CsvWriter csv(out_ / "simulate.csv", {"n_paths", "moment_p", "empirical_moment"});
        csv.row({std::to_string(blk.n_paths), detail::fmt(blk.moment_p),
                 detail::fmt(ens.empirical_moment)});
        report_.tables.push_back("simulate.csv");
    }

    const ValueFunctional& solved() {
        if (!u_) {
            if (!sc_.solver) throw SchemaError("solver", "missing block");
            diag_ = PicardDiagnostics{};
            SolverConfig cfg = sc_.solver->config;
            cfg.workers = workers_;
            u_ = picard_solve(sc_.problem, sc_.F, sc_.xi, cfg, &*diag_);
        }
        return *u_;
    }

    // absolute resolution floor for drift checks: in (nearly) deterministic
    // scenarios the estimator variance vanishes and what remains is solver
    // tolerance, not sampling noise
    double residual_floor() {
        const double scale = 1.0 + std::abs(solved().eval(sc_.problem.t0, sc_.problem.init));
        return 20.0 * (sc_.solver ? sc_.solver->config.tol : 1e-7) * scale + 1e-12;
    }

    void run_solve() {
        if (!sc_.solver) throw SchemaError("solver", "missing block");
        const auto& blk = *sc_.solver;
        const ValueFunctional& u = solved();

        {
            std::ofstream out(out_ / "value_functional.json", std::ios::trunc);
            out << u.to_json().dump() << "\n";
            report_.tables.push_back("value_functional.json");
        }

        double worst_margin = -1e300;
        bool contraction_ok = true;
        detail::CsvWriter wcsv(out_ / "picard_windows.csv",
                               {"first_node", "last_node", "length", "iterations", "max_ratio",
                                "bound"});
        for (const auto& w : diag_->windows) {
            double max_ratio = 0.0;
            for (double r : w.ratios) max_ratio = std::max(max_ratio, r);
            contraction_ok = contraction_ok && (w.ratios.empty() ||
                                                max_ratio <= w.contraction_bound + 0.05);
            worst_margin = std::max(worst_margin, max_ratio - w.contraction_bound);
            wcsv.row({std::to_string(w.first_node), std::to_string(w.last_node),
                      detail::fmt(w.length), std::to_string(w.iterations), detail::fmt(max_ratio),
                      detail::fmt(w.contraction_bound)});
        }
        report_.tables.push_back("picard_windows.csv");
        add_check({"picard_contraction", contraction_ok, worst_margin, 0.0, true,
                   "max iterate-change ratio minus the window bound (margin 0.05)"});
        add_check({"terminal_fit", diag_->terminal_fit_residual < 0.05,
                   diag_->terminal_fit_residual, 0.0, true,
                   "max |fitted - xi| over training paths at the terminal node"});

        // fixed-point residual at fresh seeds
        std::vector<std::pair<double, DiscretePath>> pts;
        for (double t : blk.residual_times) pts.push_back({t, sc_.problem.init});
        std::vector<double> ss = blk.residual_s;
        if (ss.empty()) {
            const double T = sc_.problem.model.horizon;
            ss = {0.5 * T, T};
        }
        McConfig mc{blk.residual_paths, derive_seed(sc_.seed, 0x2002u), workers_};
        const auto rows = mild_residual(u, sc_.problem, sc_.F, pts, ss, mc);
        detail::CsvWriter rcsv(out_ / "residuals.csv", {"t", "s", "residual", "stderr", "z"});
        const double zgate = bonferroni_z(rows.size());
        const double floor = residual_floor();
        bool residual_ok = true;
        double worst = 0.0;
        for (const auto& r : rows) {
            rcsv.row({detail::fmt(r.t), detail::fmt(r.s), detail::fmt(r.residual),
                      detail::fmt(r.stderr_), detail::fmt(r.z)});
            residual_ok = residual_ok && std::abs(r.residual) <= zgate * r.stderr_ + floor;
            worst = std::max(worst, std::abs(r.residual));
        }
        report_.tables.push_back("residuals.csv");
        add_check({"mild_residual", residual_ok, worst, 0.0, false,
                   "max |residual| against the " + detail::fmt(zgate) + "-sigma band"});

        if (blk.oracle == "exp_linear_f") {
            const auto& cj = sc_.raw.at("coefficients");
            const double lam = cj.at("nonlinearity").at("lambda").get<double>();
            const double xi0 = cj.at("terminal").at("value").get<double>();
            const double expected =
                xi0 * std::exp(lam * (sc_.problem.model.horizon - sc_.problem.t0));
            const double got = u.eval(sc_.problem.t0, sc_.problem.init);
            const double err = std::abs(got - expected);
            add_check({"oracle_exp_linear_f", err <= 0.01 * std::abs(expected), got, 0.0, false,
                       "expected " + detail::fmt(expected)});
        }

        if (blk.run_bsde) {
            BsdeConfig bc;
            bc.n_paths = blk.bsde_paths;
            bc.n_steps = sc_.n_steps;
            bc.seed = derive_seed(sc_.seed, 0x2003u);
            bc.feature_names = blk.config.feature_names;
            bc.ridge_scale = blk.config.ridge_scale;
            bc.workers = workers_;
            const auto bs = bsde_solve(sc_.problem, sc_.F, sc_.xi, sc_.problem.t0,
                                       sc_.problem.init, bc);
            const double pic = u.eval(sc_.problem.t0, sc_.problem.init);
            const double horizon = sc_.problem.model.horizon - sc_.problem.t0;
            const double lhat = sc_.F.lip_Lhat;
            // explicit backward Euler truncation allowance, first order in dt
            const double euler_allow = 0.5 * lhat * lhat * std::exp(2.0 * lhat * horizon) *
                                       horizon * (horizon / sc_.n_steps) * (1.0 + std::abs(pic));
            const double diff = std::abs(bs.y0 - pic);
            add_check({"bsde_vs_picard", diff <= 3.0 * bs.stderr_ + euler_allow + 1e-9, diff,
                       bs.stderr_, false, "picard " + detail::fmt(pic) + ", bsde " +
                                              detail::fmt(bs.y0) + ", euler allowance " +
                                              detail::fmt(euler_allow)});
        }
    }

    std::vector<MartingaleProbe> verification_probes() const {
        const auto& blk = *sc_.verification;
        const double T = sc_.problem.model.horizon;
        std::vector<DiscretePath> xs = {sc_.problem.init};
        for (int i = 0; i < blk.n_probe_paths; ++i)
            xs.push_back(simulate_mild(sc_.problem, sc_.n_steps,
                                       NoiseStream{derive_seed(sc_.seed, 0x3001u),
                                                   static_cast<std::uint64_t>(i)}));
        std::vector<MartingaleProbe> probes;
        const double dt = sc_.problem.init.dt();
        for (double t : blk.probe_times)
            for (const auto& x : xs)
                for (double off : blk.s_offsets) {
                    const double s = std::min(T, t + off);
                    if (s > t + 0.5 * dt) probes.push_back({t, x, s});
                }
        return probes;
    }

    void run_verify() {
        if (!sc_.verification) throw SchemaError("verification", "missing block");
        const auto& blk = *sc_.verification;
        const ValueFunctional& u = solved();
        const auto probes = verification_probes();
        McConfig mc{blk.mc_paths, derive_seed(sc_.seed, 0x3002u), workers_};
        const double floor = residual_floor();

        const auto exact = martingale_test(u.features, u.node_value(), sc_.problem, sc_.F, probes,
                                           MartingaleMode::Exact, mc, floor);
        detail::write_martingale_csv(out_ / "martingale_exact.csv", exact);
        report_.tables.push_back("martingale_exact.csv");
        double max_abs_z = 0.0;
        for (const auto& r : exact.rows) max_abs_z = std::max(max_abs_z, std::abs(r.z));
        add_check({"martingale_exact", exact.pass, max_abs_z, 0.0, false,
                   std::to_string(probes.size()) + " probes, gate " +
                       detail::fmt(exact.z_threshold)});

        const double c = blk.shift_c;
        McConfig mc_sub = mc, mc_sup = mc;
        mc_sub.seed = derive_seed(sc_.seed, 0x3003u);
        mc_sup.seed = derive_seed(sc_.seed, 0x3004u);
        const auto sub = martingale_test(u.features, u.shifted(-c), sc_.problem, sc_.F, probes,
                                         MartingaleMode::Sub, mc_sub, floor);
        const auto sub_exact = martingale_test(u.features, u.shifted(-c), sc_.problem, sc_.F,
                                               probes, MartingaleMode::Exact, mc_sub, floor);
        const auto sup = martingale_test(u.features, u.shifted(+c), sc_.problem, sc_.F, probes,
                                         MartingaleMode::Super, mc_sup, floor);
        const auto sup_exact = martingale_test(u.features, u.shifted(+c), sc_.problem, sc_.F,
                                               probes, MartingaleMode::Exact, mc_sup, floor);
        detail::write_martingale_csv(out_ / "martingale_sub_shift.csv", sub);
        detail::write_martingale_csv(out_ / "martingale_super_shift.csv", sup);
        report_.tables.push_back("martingale_sub_shift.csv");
        report_.tables.push_back("martingale_super_shift.csv");

        {
            auto counts = [](const MartingaleReport& r) {
                int passed = 0;
                for (const auto& row : r.rows) passed += row.pass ? 1 : 0;
                return json{{"mode", to_string(r.mode)},
                            {"pass", passed},
                            {"fail", static_cast<int>(r.rows.size()) - passed},
                            {"z_threshold", r.z_threshold}};
            };
            json summary = {{"solved_exact", counts(exact)},
                            {"shift_sub", counts(sub)},
                            {"shift_sub_exact", counts(sub_exact)},
                            {"shift_super", counts(sup)},
                            {"shift_super_exact", counts(sup_exact)}};
            std::ofstream out(out_ / "martingale_summary.json", std::ios::trunc);
            out << summary.dump(2) << "\n";
            report_.tables.push_back("martingale_summary.json");
        }
        add_check({"shift_subsolution", sub.pass, c, 0.0, false,
                   "u - c(T-t) passes sub mode at all probes"});
        add_check({"shift_supersolution", sup.pass, c, 0.0, false,
                   "u + c(T-t) passes super mode at all probes"});
        add_check({"shift_not_exact", !sub_exact.pass && !sup_exact.pass, 0.0, 0.0, false,
                   "shifted candidates fail exact mode at >= 1 probe"});

        // comparison chain through valid sub/super pairs
        bool chain_ok = true;
        double max_gap_err = 0.0;
        for (auto [c1, c2] : {std::pair{-2.0 * c, 0.0}, std::pair{-c, 0.0}, std::pair{-c, c},
                              std::pair{0.0, c}, std::pair{-2.0 * c, c}}) {
            McConfig mcc = mc;
            mcc.seed = derive_seed(sc_.seed, 0x3005u);
            const auto rep = comparison_test(u.features, u.shifted(c1), u.shifted(c2), sc_.problem,
                                             sc_.F, probes, mcc, 0.0, floor);
            chain_ok = chain_ok && rep.verdict == ComparisonVerdict::Pass;
            for (const auto& g : rep.gaps)
                max_gap_err = std::max(
                    max_gap_err,
                    std::abs(g.gap - (c2 - c1) * (sc_.problem.model.horizon - g.t)));
        }
        add_check({"comparison_chain", chain_ok && max_gap_err < 1e-6, max_gap_err, 0.0, false,
                   "max |gap - (c2-c1)(T-t)| over chain pairs"});

        if (!blk.stability_ns.empty()) {
            std::vector<SdeProblem> seq;
            std::vector<Nonlinearity> fs;
            for (int n : blk.stability_ns) {
                seq.push_back(sc_.problem);
                Nonlinearity fn = sc_.F;
                fn.name = sc_.F.name + "+1/" + std::to_string(n);
                auto base = sc_.F.fn;
                fn.fn = [base, n](double t, const StoppedPathView& v, double y) {
                    return base(t, v, y) + 1.0 / n;
                };
                fs.push_back(fn);
            }
            std::vector<std::pair<double, DiscretePath>> pts;
            for (double t : blk.probe_times) pts.push_back({t, sc_.problem.init});
            SolverConfig cfg = sc_.solver ? sc_.solver->config : SolverConfig{};
            cfg.n_steps = sc_.n_steps;
            cfg.workers = workers_;
            cfg.seed = derive_seed(sc_.seed, 0x5001u);
            const auto curve = solution_stability_test(seq, fs, sc_.problem, sc_.F, sc_.xi, pts, cfg);
            detail::CsvWriter scsv(out_ / "stability.csv", {"n", "deviation"});
            double max_err = 0.0;
            const double tmin = *std::min_element(blk.probe_times.begin(), blk.probe_times.end());
            for (std::size_t i = 0; i < curve.deviations.size(); ++i) {
                const int n = blk.stability_ns[i];
                scsv.row({std::to_string(n), detail::fmt(curve.deviations[i])});
                // the y-independent shift law: max deviation = (T - t_min)/n
                if (sc_.F.name == "constant" || sc_.F.name == "zero")
                    max_err = std::max(max_err,
                                       std::abs(curve.deviations[i] -
                                                (sc_.problem.model.horizon - tmin) / n));
            }
            report_.tables.push_back("stability.csv");
            add_check({"stability_decreasing", curve.decreasing, curve.final_deviation, 0.0, false,
                       "deviations fall along F_n = F + 1/n"});
            add_check({"stability_final", curve.final_deviation <= blk.stability_tol,
                       curve.final_deviation, 0.0, false,
                       "final deviation against tolerance " + detail::fmt(blk.stability_tol)});
            if (sc_.F.name == "constant" || sc_.F.name == "zero")
                add_check({"stability_shift_law", max_err < 1e-6 + 3.0 * 1e-3, max_err, 0.0, false,
                           "max |dev - (T-t)/n|"});
        }
    }

    void run_stop() {
        if (!sc_.stopping) throw SchemaError("stopping", "missing block");
        const auto& blk = *sc_.stopping;
        StopConfig cfg;
        cfg.n_train = blk.n_train;
        cfg.n_eval = blk.n_eval;
        cfg.seed = derive_seed(sc_.seed, 0x4001u);
        cfg.workers = workers_;
        cfg.bernoulli = blk.bernoulli;

        const auto [est, rule] = lsm_stop(blk.phi, sc_.problem, sc_.problem.t0, sc_.problem.init,
                                          blk.horizon, cfg);
        {
            std::ofstream out(out_ / "stopping_rule.json", std::ios::trunc);
            out << rule.to_json().dump() << "\n";
            report_.tables.push_back("stopping_rule.json");
        }
        detail::CsvWriter csv(out_ / "stopping.csv",
                              {"low", "low_stderr", "high", "high_stderr", "exact_tree"});

        const double phi_now = blk.phi.eval(sc_.problem.t0, stop_path(sc_.problem.init, sc_.problem.t0));
        add_check({"value_dominates_immediate", est.low_value >= phi_now - 3.0 * est.low_stderr - 1e-12,
                   est.low_value - phi_now, est.low_stderr, false,
                   "tau = t is admissible, so the value cannot fall below phi(t, x)"});

        const int depth = sc_.problem.init.node_at_strict(blk.horizon) - sc_.problem.start_node();
        if (blk.bernoulli && depth * sc_.problem.model.dim_k <= kTreeCapBits) {
            TreeInfo info;
            const auto tree = exact_tree_stop(blk.phi, sc_.problem, sc_.problem.t0,
                                              sc_.problem.init, blk.horizon, &info);
            csv.row({detail::fmt(est.low_value), detail::fmt(est.low_stderr),
                     detail::fmt(est.high_value), detail::fmt(est.high_stderr),
                     detail::fmt(tree.value)});
            add_check({"stopping_bracket", est.bracket_contains(tree.value),
                       tree.value, 0.0, true, "exact tree value inside [low-3se, high+3se]"});
            const double gap = std::abs(est.high_value - est.low_value) /
                               std::max(1e-12, std::abs(tree.value));
            add_check({"stopping_gap", gap < blk.gap_tol, gap, 0.0, false,
                       "relative bracket width against " + detail::fmt(blk.gap_tol)});
            add_check({"snell_supermartingale", info.max_supermartingale_violation == 0.0,
                       info.max_supermartingale_violation, 0.0, true,
                       "tree value >= mean of children everywhere"});
        } else {
            csv.row({detail::fmt(est.low_value), detail::fmt(est.low_stderr),
                     detail::fmt(est.high_value), detail::fmt(est.high_stderr), "nan"});
            add_check({"stopping_bracket_width",
                       est.low_value <= est.high_value + 3.0 * est.low_stderr,
                       est.high_value - est.low_value, est.low_stderr, false,
                       "low estimate below high estimate"});
        }
        report_.tables.push_back("stopping.csv");
    }

    void run_control() {
        if (!sc_.control) throw SchemaError("control", "missing block");
        const auto& blk = *sc_.control;
        const ControlledSdeProblem cp = sc_.controlled_problem();
        SearchConfig search = blk.search;
        search.workers = workers_;

        if (cp.structure_condition && cp.drift0.fn) {
            // declared factorization b-bar = sigma-bar * b0 checked on probes
            double worst = 0.0;
            std::vector<double> b(static_cast<std::size_t>(cp.model.dim_h));
            std::vector<double> sig(static_cast<std::size_t>(cp.model.dim_h) * cp.model.dim_k);
            std::vector<double> b0(static_cast<std::size_t>(cp.model.dim_k));
            for (int ai = 0; ai < cp.actions.size(); ++ai) {
                const double a = cp.actions.payloads[static_cast<std::size_t>(ai)];
                StoppedPathView v(cp.init, cp.start_node());
                std::fill(b.begin(), b.end(), 0.0);
                std::fill(sig.begin(), sig.end(), 0.0);
                std::fill(b0.begin(), b0.end(), 0.0);
                cp.drift.fn(cp.t0, v, a, b);
                cp.diffusion.fn(cp.t0, v, a, sig);
                cp.drift0.fn(cp.t0, v, a, b0);
                for (int i = 0; i < cp.model.dim_h; ++i) {
                    double acc = 0.0;
                    for (int m = 0; m < cp.model.dim_k; ++m)
                        acc += sig[static_cast<std::size_t>(i) * cp.model.dim_k + m] *
                               b0[static_cast<std::size_t>(m)];
                    worst = std::max(worst, std::abs(acc - b[static_cast<std::size_t>(i)]));
                }
            }
            add_check({"structure_condition", worst < 1e-12, worst, 0.0, true,
                       "max |sigma b0 - b| over actions at the initial state"});
        }

        const auto vf = value_function(cp, blk.ell, sc_.xi, cp.t0, cp.init, search);
        {
            std::ofstream out(out_ / "policy.json", std::ios::trunc);
            out << vf.estimate.snapshot.dump() << "\n";
            report_.tables.push_back("policy.json");
        }
        add_check({"value_search_saturated", vf.saturated, vf.estimate.value, vf.estimate.stderr_,
                   false, "class " + vf.policy_class});

        detail::CsvWriter dcsv(out_ / "dpp.csv", {"tau", "lhs", "rhs", "drift", "stderr", "z"});
        for (double tau : blk.dpp_taus) {
            const auto res = dpp_check(cp, blk.ell, sc_.xi, cp.t0, cp.init, tau, search,
                                       blk.n_outer);
            dcsv.row({detail::fmt(tau), detail::fmt(res.lhs), detail::fmt(res.rhs),
                      detail::fmt(res.drift), detail::fmt(res.stderr_), detail::fmt(res.z())});
            const bool pass = res.saturated && std::abs(res.z()) <= 3.0;
            add_check({"dpp_tau_" + detail::fmt(tau), pass, res.drift, res.stderr_, false,
                       res.saturated ? "z = " + detail::fmt(res.z())
                                     : "search saturation; verdict withheld"});
        }
        report_.tables.push_back("dpp.csv");

        if (!blk.hjb_probe_times.empty()) {
            std::vector<std::pair<double, DiscretePath>> probes;
            for (double t : blk.hjb_probe_times) probes.push_back({t, cp.init});
            const auto rep = hjb_viscosity_check(cp, blk.ell, sc_.xi, probes,
                                                 blk.hjb_horizon_steps, search, blk.n_outer);
            detail::CsvWriter hcsv(out_ / "hjb.csv", {"t", "action", "drift", "stderr", "z",
                                                      "verdict"});
            for (const auto& r : rep.rows)
                hcsv.row({detail::fmt(r.t), std::to_string(r.action), detail::fmt(r.drift),
                          detail::fmt(r.stderr_), detail::fmt(r.z), r.pass ? "pass" : "fail"});
            report_.tables.push_back("hjb.csv");
            add_check({"hjb_supersolution", rep.supersolution_pass, 0.0, 0.0, false,
                       "every constant-action drift <= +3 sigma"});
            add_check({"hjb_subsolution", rep.subsolution_pass, 0.0, 0.0, false,
                       "best-action drift >= -3 sigma at each probe"});
        }
    }

    Scenario sc_;
    std::filesystem::path out_;
    int workers_;
    RunReport report_;
    std::optional<ValueFunctional> u_;
    std::optional<PicardDiagnostics> diag_;
};

inline std::vector<std::string> stages_for(const std::string& subcommand, const Scenario& sc) {
    if (subcommand != "all") return {subcommand};
    std::vector<std::string> stages;
    if (sc.simulate) stages.push_back("simulate");
    if (sc.solver) stages.push_back("solve");
    if (sc.verification) stages.push_back("verify");
    if (sc.stopping) stages.push_back("stop");
    if (sc.control) stages.push_back("control");
    if (stages.empty()) throw SchemaError("scenario", "no stage blocks present");
    return stages;
}

inline RunReport run_scenario(const json& scenario_json, const std::string& subcommand,
                              const std::filesystem::path& out_dir,
                              std::optional<std::uint64_t> seed_override = std::nullopt,
                              int workers = 0) {
    json j = scenario_json;
    if (seed_override) j["seed"] = *seed_override;
    Scenario sc = Scenario::parse(j);
    ScenarioRunner runner(std::move(sc), out_dir, workers);
    return runner.run(stages_for(subcommand, Scenario::parse(j)));
}

struct ReplayVerdict {
    bool ok = true;
    std::string first_divergence;
};

/// Re-executes a report's embedded scenario with its stored seed and asserts
/// bit-identical artifacts and identical summary values.
inline ReplayVerdict replay(const std::filesystem::path& report_dir, int workers = 0) {
    std::ifstream in(report_dir / "report.json");
    if (!in) throw SchemaError("replay", "no report.json in " + report_dir.string());
    json j;
    in >> j;

    const auto replay_dir = report_dir / "replay_check";
    json scenario = j.at("scenario");
    Scenario sc = Scenario::parse(scenario);
    ScenarioRunner runner(std::move(sc), replay_dir, workers);
    const RunReport rerun = runner.run(j.at("stages").get<std::vector<std::string>>());

    ReplayVerdict verdict;
    if (rerun.results_json() != j.at("results")) {
        verdict.ok = false;
        verdict.first_divergence = "results";
        return verdict;
    }
    for (const auto& table : j.at("tables").get<std::vector<std::string>>()) {
        std::ifstream a(report_dir / table, std::ios::binary);
        std::ifstream b(replay_dir / table, std::ios::binary);
        std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
        std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
        if (sa != sb || sa.empty()) {
            verdict.ok = false;
            verdict.first_divergence = table;
            return verdict;
        }
    }
    return verdict;
}

} // namespace ppde
