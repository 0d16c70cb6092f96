// Acceptance suite: every release criterion runs here and prints exactly one
// PASS/FAIL line.  Tolerances are pinned in this file; nothing is deferred to
// runtime calibration.  Exit code is the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ppde/runner.hpp"
#include "ppde/viscosity.hpp"
#include "test_oracles.hpp"

using namespace ppde;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int id, bool pass, const std::string& what, const std::string& detail) {
    std::printf("%s criterion %2d: %s  (%s)\n", pass ? "PASS" : "FAIL", id, what.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

SdeProblem ou_problem(double lambda, double sigma, double z0, int n_steps, double T,
                      double lip_b = 1.0) {
    SdeProblem p;
    p.model.dim_h = 1;
    p.model.dim_k = 1;
    p.model.eigenvalues = {lambda};
    p.model.gamma = 0.0;
    p.model.lip_b = lip_b;
    p.model.lip_sigma = std::max(sigma, 0.1);
    p.model.horizon = T;
    p.drift = {"zero", [](double, const StoppedPathView&, std::span<double>) {}};
    p.diffusion = {"diag", [sigma](double, const StoppedPathView&, std::span<double> out) {
                       out[0] = sigma;
                   }};
    p.t0 = 0.0;
    p.init = DiscretePath::constant(1, n_steps, T, HilbertVec{{z0}});
    return p;
}

Nonlinearity linear_f(double lam) {
    return {"linear_y", [lam](double, const StoppedPathView&, double y) { return lam * y; },
            std::abs(lam) + 1e-9, std::abs(lam) + 1e-9, 0.0};
}

Nonlinearity const_f(double c) {
    return {"constant", [c](double, const StoppedPathView&, double) { return c; },
            std::abs(c) + 1.0, 0.1, 0.0};
}

ScalarFunctional one_xi() {
    return {"one", [](double, const StoppedPathView&) { return 1.0; }};
}

ScalarFunctional endpoint_xi() {
    return {"endpoint_coord",
            [](double, const StoppedPathView& v) { return v.value(v.stop_node(), 0); }};
}

// ---------------------------------------------------------------- criterion 1
void criterion_1_sde_exactness() {
    const auto start = std::chrono::steady_clock::now();
    const int n_steps = 256;
    const std::int64_t n_paths = 100000;
    auto prob = ou_problem(-1.0, 0.5, 1.0, n_steps, 1.0);

    RunningStats terminal;
    std::vector<double> xt(static_cast<std::size_t>(n_paths), 0.0);
    for (std::int64_t i = 0; i < n_paths; ++i) {
        NoiseStream stream{424242, static_cast<std::uint64_t>(i)};
        const auto path = simulate_mild(prob, n_steps, stream);
        xt[static_cast<std::size_t>(i)] = path.at(n_steps, 0);
        terminal.add(path.at(n_steps, 0));
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    const double mean_target = 0.36787944117144233;       // e^{-1}
    const double var_target = 0.10808308959542341;        // sigma^2 (1 - e^{-2}) / 2
    const double mean = terminal.mean();
    const double var = terminal.variance();
    const double se_mean = terminal.stderr_of_mean();
    // stderr of the sample variance from the empirical fourth moment
    double m4 = 0.0;
    for (double v : xt) m4 += std::pow(v - mean, 4.0);
    m4 /= static_cast<double>(n_paths);
    const double se_var = std::sqrt(std::max(0.0, m4 - var * var) / static_cast<double>(n_paths));

    const bool mean_ok = std::abs(mean - mean_target) <= 3.0 * se_mean;
    const bool var_ok = std::abs(var - var_target) <= 3.0 * se_var;
    const bool time_ok = elapsed < 10.0;
    report(1, mean_ok && var_ok && time_ok, "SDE exactness (OU mean/variance, single thread)",
           "mean " + fmt(mean) + " vs " + fmt(mean_target) + " +-" + fmt(3 * se_mean) + ", var " +
               fmt(var) + " vs " + fmt(var_target) + " +-" + fmt(3 * se_var) + ", " +
               fmt(elapsed) + " s");
}

// ---------------------------------------------------------------- criterion 2
void criterion_2_flow_property() {
    const int n_steps = 32;
    std::vector<SdeProblem> problems;
    for (double lam : {0.0, -0.5, -2.0})
        problems.push_back(ou_problem(lam, 0.5, 1.0, n_steps, 1.0));
    {
        auto p = ou_problem(-1.0, 0.4, 1.0, n_steps, 1.0);
        p.drift = {"running_sup", [](double, const StoppedPathView& v, std::span<double> out) {
                       out[0] = 0.5 * v.sup_norm();
                   }};
        problems.push_back(p);
    }
    {
        auto p = ou_problem(-1.0, 0.4, 1.0, n_steps, 1.0);
        p.drift = {"running_integral", [](double, const StoppedPathView& v, std::span<double> out) {
                       out[0] = -0.7 * v.running_integral(0);
                   }};
        problems.push_back(p);
    }
    {
        auto p = ou_problem(-1.0, 0.3, 1.0, n_steps, 1.0);
        p.drift = {"affine_endpoint", [](double, const StoppedPathView& v, std::span<double> out) {
                       out[0] = 0.4 * v.value(v.stop_node(), 0) - 0.2;
                   }};
        problems.push_back(p);
    }
    {
        SdeProblem p;
        p.model.dim_h = 2;
        p.model.dim_k = 2;
        p.model.eigenvalues = {-1.0, -4.0};
        p.model.gamma = 0.0;
        p.model.lip_b = 1.0;
        p.model.lip_sigma = 1.0;
        p.model.horizon = 1.0;
        p.drift = {"cross", [](double, const StoppedPathView& v, std::span<double> out) {
                       out[0] = 0.3 * v.value(v.stop_node(), 1);
                       out[1] = -0.2 * v.running_integral(0);
                   }};
        p.diffusion = {"diag2", [](double, const StoppedPathView&, std::span<double> out) {
                           out[0] = 0.4; // (0,0)
                           out[3] = 0.2; // (1,1)
                       }};
        p.t0 = 0.0;
        p.init = DiscretePath::constant(2, n_steps, 1.0, HilbertVec{{1.0, -0.5}});
        problems.push_back(p);
    }
    for (double sigma : {0.1, 0.8}) problems.push_back(ou_problem(-1.0, sigma, 2.0, n_steps, 1.0));
    {
        auto p = ou_problem(-1.0, 0.5, 1.0, n_steps, 1.0);
        p.t0 = 0.25; // restart segment in [0, t0] is part of the data
        problems.push_back(p);
    }

    const std::vector<double> restarts = {0.125, 0.25, 0.5, 0.625, 0.875};
    double worst = 0.0;
    long checks = 0;
    for (std::size_t pi = 0; pi < problems.size(); ++pi) {
        for (double s : restarts) {
            if (s < problems[pi].t0) continue;
            for (std::uint64_t path = 0; path < 2; ++path) {
                worst = std::max(worst, flow_check(problems[pi], s, n_steps,
                                                   NoiseStream{9000 + pi, path}));
                ++checks;
            }
        }
    }
    report(2, worst == 0.0, "flow property bit-exact over 10 problems x 5 restarts",
           std::to_string(checks) + " restarts, max deviation " + fmt(worst));
}

// ---------------------------------------------------------------- criterion 3
void criterion_3_contraction_rate() {
    bool ok = true;
    std::string detail;
    for (double lhat : {0.5, 1.0, 2.0}) {
        auto prob = ou_problem(-1.0, 0.3, 1.0, 32, 1.0, 1.0);
        SolverConfig cfg;
        cfg.n_steps = 32;
        cfg.n_train_paths = 4000;
        cfg.seed = 31337;
        cfg.tol = 1e-10;
        PicardDiagnostics diag;
        picard_solve(prob, linear_f(lhat), endpoint_xi(), cfg, &diag);
        double worst_margin = -1.0;
        for (const auto& w : diag.windows)
            for (double r : w.ratios) {
                ok = ok && r <= w.contraction_bound + 0.05;
                worst_margin = std::max(worst_margin, r - w.contraction_bound);
            }
        detail += "Lhat=" + fmt(lhat) + " margin " + fmt(worst_margin) + "; ";
    }
    report(3, ok, "Picard iterate ratio <= eps Lhat (1+M) + 0.05 in every window", detail);
}

// ---------------------------------------------------------------- criterion 4
void criterion_4_solver_vs_oracle() {
    const double e = 2.718281828459045; // scalar ODE oracle g' = -g, g(1) = 1
    auto prob64 = ou_problem(-1.0, 0.4, 1.0, 64, 1.0);
    SolverConfig cfg;
    cfg.n_steps = 64;
    cfg.n_train_paths = 4000;
    cfg.seed = 40;
    cfg.tol = 1e-10;
    const auto u = picard_solve(prob64, linear_f(1.0), one_xi(), cfg);
    const double pic = u.eval(0.0, prob64.init);
    const bool picard_ok = std::abs(pic - e) <= std::max(0.0, 0.01 * e);

    BsdeConfig b64{2000, 64, 41, {}, 1e-8, 0};
    const auto r64 = bsde_solve(prob64, linear_f(1.0), one_xi(), 0.0, prob64.init, b64);
    const double euler_allow = 0.5 * std::exp(2.0) * (1.0 / 64) * (1.0 + std::abs(pic));
    const bool agree_ok = std::abs(r64.y0 - pic) <= 3.0 * r64.stderr_ + euler_allow;

    auto prob128 = ou_problem(-1.0, 0.4, 1.0, 128, 1.0);
    BsdeConfig b128{2000, 128, 41, {}, 1e-8, 0};
    const auto r128 = bsde_solve(prob128, linear_f(1.0), one_xi(), 0.0, prob128.init, b128);
    const double ratio = (e - r64.y0) / (e - r128.y0);
    const bool order_ok = ratio > 1.6 && ratio < 2.4;

    report(4, picard_ok && agree_ok && order_ok, "solver vs scalar ODE oracle e = 2.71828",
           "picard " + fmt(pic) + ", bsde " + fmt(r64.y0) + " (allow " + fmt(euler_allow) +
               "), refinement ratio " + fmt(ratio));
}

// shared scenario for criteria 5 and 6
struct Scenario56 {
    SdeProblem prob;
    Nonlinearity F;
    ValueFunctional u;
    std::vector<MartingaleProbe> probes;
    double floor = 0.0;
};

Scenario56 build_scenario_56() {
    Scenario56 s{ou_problem(-1.0, 0.4, 1.0, 32, 1.0), linear_f(0.4), {}, {}, 0.0};
    SolverConfig cfg;
    cfg.n_steps = 32;
    cfg.n_train_paths = 150000;
    cfg.seed = 56001;
    cfg.tol = 1e-9;
    s.u = picard_solve(s.prob, s.F, endpoint_xi(), cfg);
    s.floor = 2e-6;

    std::vector<DiscretePath> xs = {s.prob.init};
    for (std::uint64_t i = 0; i < 3; ++i)
        xs.push_back(simulate_mild(s.prob, 32, NoiseStream{56002, i}));
    // exactly 20 probes: 2 x 3 x 2 + 1 x 4 x 2
    for (double t : {0.0, 0.25})
        for (int xi_idx : {0, 1, 2})
            for (double off : {0.375, 0.625})
                s.probes.push_back({t, xs[static_cast<std::size_t>(xi_idx)], t + off});
    for (int xi_idx : {0, 1, 2, 3})
        for (double off : {0.25, 0.5})
            s.probes.push_back({0.5, xs[static_cast<std::size_t>(xi_idx)], 0.5 + off});
    return s;
}

// ---------------------------------------------------------------- criterion 5
void criterion_5_martingale(const Scenario56& s) {
    McConfig mc{5000, 56003};
    const auto exact = martingale_test(s.u.features, s.u.node_value(), s.prob, s.F, s.probes,
                                       MartingaleMode::Exact, mc, s.floor);

    const double c = 0.1;
    McConfig mc_sub{5000, 56004}, mc_sup{5000, 56005};
    const auto sub = martingale_test(s.u.features, s.u.shifted(-c), s.prob, s.F, s.probes,
                                     MartingaleMode::Sub, mc_sub, s.floor);
    const auto sub_exact = martingale_test(s.u.features, s.u.shifted(-c), s.prob, s.F, s.probes,
                                           MartingaleMode::Exact, mc_sub, s.floor);
    const auto sup = martingale_test(s.u.features, s.u.shifted(+c), s.prob, s.F, s.probes,
                                     MartingaleMode::Super, mc_sup, s.floor);
    const auto sup_exact = martingale_test(s.u.features, s.u.shifted(+c), s.prob, s.F, s.probes,
                                           MartingaleMode::Exact, mc_sup, s.floor);

    double max_abs_z = 0.0;
    for (const auto& r : exact.rows) max_abs_z = std::max(max_abs_z, std::abs(r.z));
    const bool ok = exact.pass && sub.pass && sup.pass && !sub_exact.pass && !sup_exact.pass;
    report(5, ok, "martingale characterization at 20 probes (Bonferroni 3 sigma)",
           "solved max|z| " + fmt(max_abs_z) + " vs gate " + fmt(exact.z_threshold) +
               "; shifts: sub " + (sub.pass ? "pass" : "fail") + ", super " +
               (sup.pass ? "pass" : "fail") + ", exact-mode rejections " +
               (!sub_exact.pass && !sup_exact.pass ? "yes" : "no"));
}

// ---------------------------------------------------------------- criterion 6
void criterion_6_comparison(const Scenario56& s) {
    const double c = 0.1;
    McConfig mc{5000, 56006};
    bool ok = true;
    double worst_gap_err = 0.0;
    // two-step pairs carry the 2c(T-t) gap; one-step pairs tie the chain
    for (auto [c1, c2] : {std::pair{-2.0 * c, 0.0}, std::pair{-c, c}, std::pair{-c, 0.0},
                          std::pair{0.0, c}, std::pair{-2.0 * c, c}}) {
        const auto rep = comparison_test(s.u.features, s.u.shifted(c1), s.u.shifted(c2), s.prob,
                                         s.F, s.probes, mc, 0.0, s.floor);
        ok = ok && rep.verdict == ComparisonVerdict::Pass;
        for (const auto& g : rep.gaps)
            worst_gap_err = std::max(worst_gap_err,
                                     std::abs(g.gap - (c2 - c1) * (s.prob.model.horizon - g.t)));
    }
    ok = ok && worst_gap_err <= 1e-9;
    report(6, ok, "comparison chain u-2c(T-t) <= u-c(T-t) <= u <= u+c(T-t)",
           "max |gap - (c2-c1)(T-t)| = " + fmt(worst_gap_err));
}

// ---------------------------------------------------------------- criterion 7
void criterion_7_stopping() {
    auto prob = ou_problem(-1.0, 0.8, 0.1, 3, 0.75);
    const auto phi = endpoint_xi();
    StopConfig cfg;
    cfg.n_train = 40000;
    cfg.n_eval = 40000;
    cfg.seed = 70;
    cfg.bernoulli = true;

    const auto [est, rule] = lsm_stop(phi, prob, 0.0, prob.init, 0.75, cfg);
    const auto tree = exact_tree_stop(phi, prob, 0.0, prob.init, 0.75);
    const double enumerated = oracles::enumerate_stopping_rules(phi, prob, 0.0, prob.init, 0.75);

    const bool bracket_ok = est.bracket_contains(tree.value);
    const double gap = std::abs(est.high_value - est.low_value) / std::abs(tree.value);
    const bool gap_ok = gap < 0.02;
    const bool oracle_ok = std::abs(tree.value - enumerated) <= 1e-12;
    report(7, bracket_ok && gap_ok && oracle_ok, "optimal stopping exactness (Bernoulli, 3 steps)",
           "tree " + fmt(tree.value) + ", enumeration " + fmt(enumerated) + ", bracket [" +
               fmt(est.low_value) + ", " + fmt(est.high_value) + "], gap " + fmt(gap));
}

// ---------------------------------------------------------------- criterion 8
void criterion_8_control_dpp() {
    // deterministic bang-bang
    ControlledSdeProblem bb;
    bb.model.dim_h = 1;
    bb.model.dim_k = 1;
    bb.model.eigenvalues = {0.0};
    bb.model.gamma = 0.0;
    bb.model.lip_b = 1.0;
    bb.model.lip_sigma = 1.0;
    bb.model.horizon = 1.0;
    bb.actions = {{"down", "up"}, {-1.0, 1.0}};
    bb.drift = {"a*e1", [](double, const StoppedPathView&, double a, std::span<double> out) {
                    out[0] = a;
                }};
    bb.diffusion = {"zero", [](double, const StoppedPathView&, double, std::span<double>) {}};
    bb.t0 = 0.0;
    bb.init = DiscretePath::constant(1, 4, 1.0, HilbertVec{{1.0}});
    RunningCost zero_ell{"zero", [](double, const StoppedPathView&, double) { return 0.0; }, 1.0,
                         0.0};
    SearchConfig det_cfg;
    det_cfg.n_paths = 32;
    det_cfg.seed = 80;
    det_cfg.feedback_candidate = false;
    const auto vf = value_function(bb, zero_ell, endpoint_xi(), 0.0, bb.init, det_cfg);
    const auto det_dpp = dpp_check(bb, zero_ell, endpoint_xi(), 0.0, bb.init, 0.5, det_cfg, 4);
    const bool det_ok = vf.estimate.value == 2.0 && det_dpp.drift == 0.0 && det_dpp.saturated;

    // stochastic two-action OU, exhaustive lattice with n_steps = 4
    ControlledSdeProblem ou = bb;
    ou.model.eigenvalues = {-1.0};
    ou.diffusion = {"diag", [](double, const StoppedPathView&, double, std::span<double> out) {
                        out[0] = 0.25;
                    }};
    ou.drift = {"a*e1", [](double, const StoppedPathView&, double a, std::span<double> out) {
                    out[0] = 0.25 * a;
                }};
    SearchConfig sto_cfg;
    sto_cfg.n_paths = 4000;
    sto_cfg.seed = 81;
    sto_cfg.feedback_candidate = false;
    bool sto_ok = true;
    std::string zs;
    int probe_count = 0;
    for (auto [t, tau] : {std::pair{0.0, 0.25}, std::pair{0.0, 0.5}, std::pair{0.0, 0.75},
                          std::pair{0.25, 0.5}, std::pair{0.25, 0.75}}) {
        SearchConfig cfg_i = sto_cfg;
        cfg_i.seed = derive_seed(81, static_cast<std::uint64_t>(probe_count));
        const auto res = dpp_check(ou, zero_ell, endpoint_xi(), t, ou.init, tau, cfg_i, 300);
        sto_ok = sto_ok && res.saturated && std::abs(res.z()) <= 3.0;
        zs += fmt(res.z()) + " ";
        ++probe_count;
    }
    report(8, det_ok && sto_ok, "control and DPP (deterministic exact, stochastic at 5 probes)",
           "bang-bang value " + fmt(vf.estimate.value) + ", drift " + fmt(det_dpp.drift) +
               "; OU dpp z: " + zs);
}

// ---------------------------------------------------------------- criterion 9
void criterion_9_hjb() {
    ControlledSdeProblem ou;
    ou.model.dim_h = 1;
    ou.model.dim_k = 1;
    ou.model.eigenvalues = {-1.0};
    ou.model.gamma = 0.0;
    ou.model.lip_b = 1.0;
    ou.model.lip_sigma = 1.0;
    ou.model.horizon = 1.0;
    ou.actions = {{"down", "up"}, {-1.0, 1.0}};
    ou.drift = {"a*e1", [](double, const StoppedPathView&, double a, std::span<double> out) {
                    out[0] = 0.25 * a;
                }};
    ou.diffusion = {"diag", [](double, const StoppedPathView&, double, std::span<double> out) {
                        out[0] = 0.25;
                    }};
    ou.t0 = 0.0;
    ou.init = DiscretePath::constant(1, 4, 1.0, HilbertVec{{1.0}});
    RunningCost ell{"coord", [](double, const StoppedPathView& v, double) {
                        return 0.1 * v.value(v.stop_node(), 0);
                    },
                    1.0, 1.0};

    std::vector<std::pair<double, DiscretePath>> probes;
    for (double level : {0.6, 1.0, 1.4})
        for (double t : {0.25, 0.5, 0.75})
            probes.push_back({t, DiscretePath::constant(1, 4, 1.0, HilbertVec{{level}})});
    probes.push_back({0.5, simulate_mild(ou.frozen(1), 4, NoiseStream{90, 7})});

    SearchConfig cfg;
    cfg.n_paths = 3000;
    cfg.seed = 91;
    cfg.feedback_candidate = false;
    const auto rep = hjb_viscosity_check(ou, ell, endpoint_xi(), probes, 1, cfg, 250);
    double worst_super = -1e300, worst_sub = 1e300;
    for (const auto& r : rep.rows) {
        if (r.action >= 0) worst_super = std::max(worst_super, r.z);
        else worst_sub = std::min(worst_sub, r.z);
    }
    report(9, rep.supersolution_pass && rep.subsolution_pass,
           "HJB viscosity property of v at 10 probes",
           "max constant-action z " + fmt(worst_super) + " (<= 3), min best-action z " +
               fmt(worst_sub) + " (>= -3)");
}

// --------------------------------------------------------------- criterion 10
void criterion_10_stability() {
    auto prob = ou_problem(-1.0, 0.4, 1.0, 32, 1.0);
    const auto F = const_f(0.3);
    SolverConfig cfg;
    cfg.n_steps = 32;
    cfg.n_train_paths = 8000;
    cfg.seed = 100;
    cfg.tol = 1e-10;
    const auto u = picard_solve(prob, F, endpoint_xi(), cfg);

    const std::vector<double> probe_times = {0.0, 0.25, 0.5};
    bool ok = true;
    double prev = 1e300;
    std::string detail;
    for (int n : {2, 4, 8, 16}) {
        Nonlinearity fn{"constant+1/n",
                        [n](double t, const StoppedPathView& v, double y) {
                            return 0.3 + 1.0 / n;
                        },
                        2.0, 0.1, 0.0};
        const auto un = picard_solve(prob, fn, endpoint_xi(), cfg);
        double max_dev = 0.0, law_err = 0.0;
        for (double t : probe_times) {
            const double dev = std::abs(un.eval(t, prob.init) - u.eval(t, prob.init));
            max_dev = std::max(max_dev, dev);
            law_err = std::max(law_err, std::abs(dev - (1.0 - t) / n));
        }
        // same training seed: the shift moves intercepts exactly, so the law
        // holds to solver tolerance (3-sigma band is trivially wider)
        ok = ok && law_err <= 1e-7 && max_dev <= prev + 1e-12;
        prev = max_dev;
        detail += "n=" + std::to_string(n) + ":" + fmt(max_dev) + " ";
    }
    report(10, ok, "stability: F + 1/n shifts the solution by (T-t)/n, decreasing", detail);
}

// --------------------------------------------------------------- criterion 11
void criterion_11_reproducibility(const fs::path& scenario_dir) {
    const std::vector<std::string> names = {"ou_exact",          "ou_linear_f", "ou_endpoint",
                                            "stopping_bernoulli", "control_bangbang", "control_ou"};
    bool ok = true;
    std::string detail;
    const fs::path work = fs::temp_directory_path() / "ppde_acceptance_replay";
    fs::remove_all(work);
    for (const auto& name : names) {
        std::ifstream in(scenario_dir / (name + ".json"));
        if (!in) {
            ok = false;
            detail += name + ":missing ";
            continue;
        }
        json j;
        in >> j;
        const fs::path d1 = work / (name + "_w1");
        const auto r1 = run_scenario(j, "all", d1, std::nullopt, 1);
        const bool rep1 = replay(d1, 1).ok;
        const bool rep4 = replay(d1, 4).ok;

        const fs::path d4 = work / (name + "_w4");
        const auto r4 = run_scenario(j, "all", d4, std::nullopt, 4);
        bool same = r1.results_json() == r4.results_json();
        if (fs::exists(d1 / "ensemble.bin")) {
            std::ifstream a(d1 / "ensemble.bin", std::ios::binary);
            std::ifstream b(d4 / "ensemble.bin", std::ios::binary);
            std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
            std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
            same = same && sa == sb;
        }
        const bool this_ok = r1.all_pass && rep1 && rep4 && same;
        ok = ok && this_ok;
        detail += name + (this_ok ? ":ok " : ":FAIL ");
    }
    fs::remove_all(work);
    report(11, ok, "replay bit-exact for bundled scenarios at WORKERS in {1, 4}", detail);
}

} // namespace

int main(int argc, char** argv) {
    fs::path scenario_dir = "scenarios";
    for (int i = 1; i + 1 < argc; ++i)
        if (std::string(argv[i]) == "--scenario-dir") scenario_dir = argv[i + 1];

    criterion_1_sde_exactness();
    criterion_2_flow_property();
    criterion_3_contraction_rate();
    criterion_4_solver_vs_oracle();
    const auto s56 = build_scenario_56();
    criterion_5_martingale(s56);
    criterion_6_comparison(s56);
    criterion_7_stopping();
    criterion_8_control_dpp();
    criterion_9_hjb();
    criterion_10_stability();
    criterion_11_reproducibility(scenario_dir);

    if (g_failures == 0) std::printf("acceptance: all 11 criteria pass\n");
    else std::printf("acceptance: %d criteria FAILED\n", g_failures);
    return g_failures;
}
