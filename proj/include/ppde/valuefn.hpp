#pragma once

#include <functional>
#include <span>
#include <vector>

#include <json.hpp>

#include "ppde/features.hpp"
#include "ppde/path.hpp"
#include "ppde/regression.hpp"

namespace ppde {

/// Per-node evaluator fed the tracker-computed feature vector of the stopped
/// path.  Value functionals, shifted variants and jet payoffs all share it.
using NodeValue =
    std::function<double(int node, std::span<const double> feats, const StoppedPathView& view)>;

/// Regression representation of a non-anticipative functional u: one
/// coefficient vector per grid node over a shared feature map.  Evaluation at
/// (t, x) reads only the path stopped at t by construction.
struct ValueFunctional {
    FeatureMap features;
    int n_steps = 1;
    double horizon = 1.0;
    std::vector<std::vector<double>> coef; // (n_steps + 1) vectors of features.count()

    double eval_node(int node, const DiscretePath& x) const {
        std::vector<double> f(static_cast<std::size_t>(features.count()), 0.0);
        features.eval(StoppedPathView(x, node), f);
        return dot(coef[static_cast<std::size_t>(node)], f);
    }

    double eval(double t, const DiscretePath& x) const {
        return eval_node(x.node_at_strict(t), x);
    }

    NodeValue node_value() const {
        return [this](int node, std::span<const double> feats, const StoppedPathView&) {
            return dot(coef[static_cast<std::size_t>(node)], feats);
        };
    }

    /// u + c (T - t): the sub/supersolution construction used by the
    /// verification layer.
    NodeValue shifted(double c) const {
        const double T = horizon;
        const double dt = horizon / n_steps;
        return [this, c, T, dt](int node, std::span<const double> feats, const StoppedPathView&) {
            return dot(coef[static_cast<std::size_t>(node)], feats) + c * (T - node * dt);
        };
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["features"] = features.groups;
        j["dim_h"] = features.dim_h;
        j["n_steps"] = n_steps;
        j["horizon"] = horizon;
        j["coef"] = coef;
        return j;
    }

    static ValueFunctional from_json(const nlohmann::json& j) {
        ValueFunctional u;
        u.features = FeatureMap::build(j.at("features").get<std::vector<std::string>>(),
                                       j.at("dim_h").get<int>());
        u.n_steps = j.at("n_steps").get<int>();
        u.horizon = j.at("horizon").get<double>();
        u.coef = j.at("coef").get<std::vector<std::vector<double>>>();
        return u;
    }
};

} // namespace ppde
