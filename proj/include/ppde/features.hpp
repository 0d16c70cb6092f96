#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "ppde/errors.hpp"
#include "ppde/path.hpp"

namespace ppde {

/// Named non-anticipative scalar features of a stopped path, the regression
/// basis for value functionals.  Groups:
///   const            - intercept
///   endpoint         - current value, one feature per mode
///   running_integral - trapezoid of each mode over [0, t]
///   running_sup      - running sup of the H-norm
struct FeatureMap {
    std::vector<std::string> groups;
    int dim_h = 1;

    static FeatureMap build(std::vector<std::string> groups, int dim_h) {
        if (groups.empty()) groups = {"const", "endpoint", "running_integral", "running_sup"};
        FeatureMap m;
        m.dim_h = dim_h;
        for (const auto& g : groups) {
            if (g != "const" && g != "endpoint" && g != "running_integral" && g != "running_sup")
                throw SchemaError("solver.features", "unknown feature group '" + g + "'");
            m.groups.push_back(g);
        }
        return m;
    }

    int count() const {
        int k = 0;
        for (const auto& g : groups) {
            if (g == "const" || g == "running_sup") k += 1;
            else k += dim_h;
        }
        return k;
    }

    /// Direct (non-incremental) evaluation on a stopped view.
    void eval(const StoppedPathView& x, std::span<double> out) const {
        int o = 0;
        for (const auto& g : groups) {
            if (g == "const") {
                out[o++] = 1.0;
            } else if (g == "endpoint") {
                for (int k = 0; k < dim_h; ++k) out[o++] = x.value(x.stop_node(), k);
            } else if (g == "running_integral") {
                for (int k = 0; k < dim_h; ++k) out[o++] = x.running_integral(k);
            } else { // running_sup
                out[o++] = x.sup_norm();
            }
        }
    }
};

/// Walks a path forward keeping the running statistics, so features at every
/// node of a path cost O(dim_h) instead of O(node).
class FeatureTracker {
public:
    FeatureTracker(const FeatureMap& map, const DiscretePath& path)
        : map_(&map), path_(&path), integral_(static_cast<std::size_t>(map.dim_h), 0.0) {
        node_ = 0;
        sup_ = path.node_norm(0);
    }

    int node() const { return node_; }

    /// Moves to `node` (must not go backward).
    void advance_to(int node) {
        const double h = path_->dt();
        while (node_ < node) {
            for (int k = 0; k < map_->dim_h; ++k)
                integral_[static_cast<std::size_t>(k)] +=
                    0.5 * h * (path_->at(node_, k) + path_->at(node_ + 1, k));
            ++node_;
            sup_ = std::max(sup_, path_->node_norm(node_));
        }
    }

    void write(std::span<double> out) const {
        int o = 0;
        for (const auto& g : map_->groups) {
            if (g == "const") {
                out[o++] = 1.0;
            } else if (g == "endpoint") {
                for (int k = 0; k < map_->dim_h; ++k) out[o++] = path_->at(node_, k);
            } else if (g == "running_integral") {
                for (int k = 0; k < map_->dim_h; ++k) out[o++] = integral_[static_cast<std::size_t>(k)];
            } else {
                out[o++] = sup_;
            }
        }
    }

private:
    const FeatureMap* map_;
    const DiscretePath* path_;
    std::vector<double> integral_;
    double sup_ = 0.0;
    int node_ = 0;
};

} // namespace ppde
