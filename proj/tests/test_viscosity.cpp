#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ppde/viscosity.hpp"

using namespace ppde;

namespace {

SdeProblem ou_problem(double lambda, double sigma, double z0, int n_steps, double T) {
    SdeProblem p;
    p.model.dim_h = 1;
    p.model.dim_k = 1;
    p.model.eigenvalues = {lambda};
    p.model.gamma = 0.0;
    p.model.lip_b = 1.0;
    p.model.lip_sigma = 1.0;
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
    return {"linear", [lam](double, const StoppedPathView&, double y) { return lam * y; },
            std::abs(lam), std::abs(lam), 0.0};
}

Nonlinearity zero_f() {
    return {"zero", [](double, const StoppedPathView&, double) { return 0.0; }, 1.0, 1e-6, 0.0};
}

ScalarFunctional endpoint_xi() {
    return {"endpoint", [](double, const StoppedPathView& v) { return v.value(v.stop_node(), 0); }};
}

struct Solved {
    SdeProblem prob;
    Nonlinearity F;
    ValueFunctional u;
};

// OU with F = 0.4 y and endpoint terminal: Lhat T = 0.4 <= 0.5, so the
// +-c(T-t) shifts below are certified strict sub/supersolutions.
Solved solved_scenario() {
    Solved s{ou_problem(-1.0, 0.4, 1.0, 32, 1.0), linear_f(0.4), {}};
    SolverConfig cfg;
    cfg.n_steps = 32;
    cfg.n_train_paths = 100000;
    cfg.seed = 101;
    cfg.tol = 1e-9;
    s.u = picard_solve(s.prob, s.F, endpoint_xi(), cfg);
    return s;
}

std::vector<MartingaleProbe> standard_probes(const SdeProblem& prob) {
    std::vector<MartingaleProbe> probes;
    auto wiggly = simulate_mild(prob, prob.init.n_steps, NoiseStream{2024, 0});
    for (double t : {0.0, 0.25}) {
        probes.push_back({t, prob.init, t + 0.5});
        probes.push_back({t, wiggly, t + 0.75});
    }
    probes.push_back({0.5, wiggly, 1.0});
    return probes;
}

} // namespace

TEST_CASE("martingale_test: solved u passes exact mode, shifts pass their sides only") {
    auto s = solved_scenario();
    auto probes = standard_probes(s.prob);
    McConfig mc{6000, 777};

    auto exact = martingale_test(s.u.features, s.u.node_value(), s.prob, s.F, probes,
                                 MartingaleMode::Exact, mc);
    CHECK(exact.pass);

    const double c = 0.1;
    auto sub = martingale_test(s.u.features, s.u.shifted(-c), s.prob, s.F, probes,
                               MartingaleMode::Sub, mc);
    CHECK(sub.pass);
    auto sub_exact = martingale_test(s.u.features, s.u.shifted(-c), s.prob, s.F, probes,
                                     MartingaleMode::Exact, mc);
    CHECK_FALSE(sub_exact.pass);
    // the shift's drift is bounded below by c (s-t)(1 - Lhat T) when it matters
    for (const auto& row : sub_exact.rows)
        if (row.s > row.t) CHECK(row.drift > 0.0);

    auto super = martingale_test(s.u.features, s.u.shifted(+c), s.prob, s.F, probes,
                                 MartingaleMode::Super, mc);
    CHECK(super.pass);
    auto super_exact = martingale_test(s.u.features, s.u.shifted(+c), s.prob, s.F, probes,
                                       MartingaleMode::Exact, mc);
    CHECK_FALSE(super_exact.pass);
}

TEST_CASE("sub/super duality: drifts negate exactly under the mirror map") {
    auto s = solved_scenario();
    std::vector<MartingaleProbe> probes = {{0.0, s.prob.init, 0.5}, {0.25, s.prob.init, 0.75}};
    McConfig mc{4000, 555};

    auto u = s.u.node_value();
    NodeValue neg_u = [u](int node, std::span<const double> f, const StoppedPathView& v) {
        return -u(node, f, v);
    };
    // F~(t, x, y) = -F(t, x, -y) mirrors the whole drift process
    Nonlinearity mirrored{"mirrored",
                          [fn = s.F.fn](double t, const StoppedPathView& v, double y) {
                              return -fn(t, v, -y);
                          },
                          s.F.growth_L, s.F.lip_Lhat, s.F.growth_p};

    auto shifted_sub = martingale_test(s.u.features, s.u.shifted(-0.1), s.prob, s.F, probes,
                                       MartingaleMode::Sub, mc);
    NodeValue neg_shifted = [sh = s.u.shifted(-0.1)](int node, std::span<const double> f,
                                                     const StoppedPathView& v) {
        return -sh(node, f, v);
    };
    auto mirrored_super = martingale_test(s.u.features, neg_shifted, s.prob, mirrored, probes,
                                          MartingaleMode::Super, mc);
    REQUIRE(shifted_sub.rows.size() == mirrored_super.rows.size());
    for (std::size_t i = 0; i < shifted_sub.rows.size(); ++i)
        CHECK(mirrored_super.rows[i].drift == -shifted_sub.rows[i].drift);
    CHECK(mirrored_super.pass);
}

TEST_CASE("jet_probe: u = 0, F = 0 membership flips sign with alpha") {
    auto prob = ou_problem(-1.0, 0.5, 1.0, 4, 1.0);
    NodeValue zero = [](int, std::span<const double>, const StoppedPathView&) { return 0.0; };
    FeatureMap map = FeatureMap::build({}, 1);
    StopConfig cfg;
    cfg.bernoulli = true;
    cfg.seed = 31;

    auto pos = jet_probe(map, zero, prob, zero_f(), 0.25, prob.init, +0.5, 0.75, JetSide::Sub, cfg);
    CHECK(pos.exact);
    CHECK(pos.member);          // alpha t is minimized by stopping immediately
    CHECK(pos.inequality_pass); // -alpha <= 0

    auto neg = jet_probe(map, zero, prob, zero_f(), 0.25, prob.init, -0.5, 0.75, JetSide::Sub, cfg);
    CHECK_FALSE(neg.member); // waiting improves alpha tau, so not a subjet slope

    // mirrored for the superjet
    auto sneg = jet_probe(map, zero, prob, zero_f(), 0.25, prob.init, -0.5, 0.75, JetSide::Super, cfg);
    CHECK(sneg.member);
    CHECK(sneg.inequality_pass); // -alpha >= 0
    auto spos = jet_probe(map, zero, prob, zero_f(), 0.25, prob.init, +0.5, 0.75, JetSide::Super, cfg);
    CHECK_FALSE(spos.member);
}

TEST_CASE("jet_probe: membership is monotone in alpha around the boundary slope") {
    auto s = solved_scenario();
    const double t = 0.25;
    const double h = 0.75;
    const double u_tx = s.u.eval(t, s.prob.init);
    const double boundary = -0.4 * u_tx; // -F(t, x, u(t,x))

    StopConfig cfg;
    cfg.n_train = 8000;
    cfg.n_eval = 8000;
    cfg.seed = 77;

    std::vector<int> members;
    for (double da : {-0.5, -0.15, 0.15, 0.5, 1.0}) {
        auto r = jet_probe(s.u.features, s.u.node_value(), s.prob, s.F, t, s.prob.init,
                           boundary + da, h, JetSide::Sub, cfg);
        members.push_back(r.member ? 1 : 0);
        if (da >= 0.15) {
            CHECK(r.member);
            CHECK(r.inequality_pass);
        }
        if (da <= -0.15) CHECK_FALSE(r.member);
    }
    for (std::size_t i = 1; i < members.size(); ++i) CHECK(members[i] >= members[i - 1]);

    // mirrored superjet side: membership holds below the boundary slope
    auto sup_lo = jet_probe(s.u.features, s.u.node_value(), s.prob, s.F, t, s.prob.init,
                            boundary - 0.5, h, JetSide::Super, cfg);
    CHECK(sup_lo.member);
    CHECK(sup_lo.inequality_pass); // -alpha - F >= 0 above the slope deficit
    auto sup_hi = jet_probe(s.u.features, s.u.node_value(), s.prob, s.F, t, s.prob.init,
                            boundary + 0.5, h, JetSide::Super, cfg);
    CHECK_FALSE(sup_hi.member);
}

TEST_CASE("jet_probe: one-step horizon matches the two-point enumeration") {
    auto prob = ou_problem(-1.0, 0.5, 1.0, 4, 1.0);
    FeatureMap map = FeatureMap::build({}, 1);
    StopConfig cfg;
    cfg.bernoulli = true;
    cfg.seed = 41;
    // u(t, x) = x_t as a node value
    NodeValue ux = [](int node, std::span<const double>, const StoppedPathView& v) {
        return v.value(node, 0);
    };
    const double alpha = 0.3;
    const double dt = prob.init.dt();
    const double t = 0.25, h = 0.5;

    auto r = jet_probe(map, ux, prob, zero_f(), t, prob.init, alpha, h, JetSide::Sub, cfg);

    // exhaustive: tau = t, or tau = t + dt over the two equally likely leaves
    const double g_now = alpha * t - 1.0;
    const double lam = std::exp(-dt);
    const double up = lam * (1.0 + 0.5 * std::sqrt(dt));
    const double dn = lam * (1.0 - 0.5 * std::sqrt(dt));
    const double g_wait = alpha * (t + dt) - 0.5 * (up + dn);
    const bool member_oracle = g_now <= std::min(g_now, g_wait) + 1e-12;
    CHECK(r.member == member_oracle);
}

TEST_CASE("comparison_test: the shift chain orders correctly with the stated gaps") {
    auto s = solved_scenario();
    auto probes = standard_probes(s.prob);
    McConfig mc{6000, 999};
    const double c = 0.1;

    // valid sub/super pairs along the chain: the right member must be the
    // solution or above it (u - kc is strictly sub, never super)
    auto chain = {std::pair{-2.0 * c, 0.0}, std::pair{-c, 0.0}, std::pair{-c, c},
                  std::pair{0.0, c}, std::pair{-2.0 * c, c}};
    for (auto [c1, c2] : chain) {
        auto rep = comparison_test(s.u.features, s.u.shifted(c1), s.u.shifted(c2), s.prob, s.F,
                                   probes, mc);
        CHECK(rep.verdict == ComparisonVerdict::Pass);
        for (const auto& g : rep.gaps) {
            const double expected = (c2 - c1) * (1.0 - g.t);
            CHECK(g.gap == doctest::Approx(expected).epsilon(1e-9));
        }
    }

    // pointwise chain order at the probes is plain arithmetic on the shifts
    for (const auto& probe : probes) {
        const int j = probe.x.node_at_strict(probe.t);
        std::vector<double> f(static_cast<std::size_t>(s.u.features.count()));
        FeatureTracker tracker(s.u.features, probe.x);
        tracker.advance_to(j);
        tracker.write(f);
        StoppedPathView view(probe.x, j);
        double prev = -1e300;
        for (double ck : {-2.0 * c, -c, 0.0, c}) {
            const double val = s.u.shifted(ck)(j, f, view);
            CHECK(val >= prev);
            prev = val;
        }
    }

    auto equal = comparison_test(s.u.features, s.u.node_value(), s.u.node_value(), s.prob, s.F,
                                 probes, mc);
    CHECK(equal.verdict == ComparisonVerdict::Pass);

    // mislabeled pair: u + c(T-t) is not a subsolution, and the harness says so
    auto fault = comparison_test(s.u.features, s.u.shifted(+c), s.u.node_value(), s.prob, s.F,
                                 probes, mc);
    CHECK(fault.verdict == ComparisonVerdict::PreconditionFailed);
}

TEST_CASE("solved u passes all three martingale modes at once") {
    auto s = solved_scenario();
    std::vector<MartingaleProbe> probes = {{0.0, s.prob.init, 0.5}, {0.25, s.prob.init, 1.0}};
    McConfig mc{5000, 1234};
    CHECK(martingale_test(s.u.features, s.u.node_value(), s.prob, s.F, probes,
                          MartingaleMode::Exact, mc)
              .pass);
    CHECK(martingale_test(s.u.features, s.u.node_value(), s.prob, s.F, probes,
                          MartingaleMode::Sub, mc)
              .pass);
    CHECK(martingale_test(s.u.features, s.u.node_value(), s.prob, s.F, probes,
                          MartingaleMode::Super, mc)
              .pass);
}

TEST_CASE("solution_stability: eigenvalue truncation sequence under paired seeds") {
    auto limit = ou_problem(-1.0, 0.4, 1.0, 16, 1.0);
    Nonlinearity F = linear_f(0.3);
    SolverConfig cfg;
    cfg.n_steps = 16;
    cfg.n_train_paths = 3000;
    cfg.seed = 404;
    cfg.tol = 1e-9;

    std::vector<SdeProblem> seq;
    std::vector<Nonlinearity> fs;
    for (double shift : {0.5, 0.25, 0.1}) {
        auto p = limit;
        p.model.eigenvalues = {-1.0 - shift};
        seq.push_back(p);
        fs.push_back(F);
    }
    auto curve = solution_stability_test(seq, fs, limit, F, endpoint_xi(), {{0.0, limit.init}},
                                         cfg);
    CHECK(curve.decreasing);
    CHECK(curve.deviations.front() > curve.deviations.back());
    CHECK(curve.final_deviation < 0.05);
}

TEST_CASE("solution_stability: constant sequence, then the 1/n shift law") {
    auto prob = ou_problem(-1.0, 0.4, 1.0, 32, 1.0);
    Nonlinearity F = linear_f(0.0); // y-independent base so the shift is exact
    F.lip_Lhat = 0.1;
    ScalarFunctional xi = endpoint_xi();
    SolverConfig cfg;
    cfg.n_steps = 32;
    cfg.n_train_paths = 4000;
    cfg.seed = 303;
    cfg.tol = 1e-10;

    std::vector<std::pair<double, DiscretePath>> probes = {{0.0, prob.init}, {0.5, prob.init}};

    auto flat = solution_stability_test({prob, prob}, {F, F}, prob, F, xi, probes, cfg);
    for (double d : flat.deviations) CHECK(d < 1e-9);

    std::vector<SdeProblem> seq;
    std::vector<Nonlinearity> fs;
    for (int n : {2, 4, 8}) {
        seq.push_back(prob);
        Nonlinearity fn{"F+1/n",
                        [n](double, const StoppedPathView&, double) { return 1.0 / n; },
                        1.0, 0.1, 0.0};
        fs.push_back(fn);
    }
    auto curve = solution_stability_test(seq, fs, prob, F, xi, probes, cfg);
    REQUIRE(curve.deviations.size() == 3);
    int idx = 0;
    for (int n : {2, 4, 8}) {
        // max over probes of (T - t)/n is attained at t = 0
        CHECK(curve.deviations[static_cast<std::size_t>(idx++)] ==
              doctest::Approx(1.0 / n).epsilon(1e-6));
    }
    CHECK(curve.decreasing);
    CHECK(curve.final_deviation < 0.2);
}
