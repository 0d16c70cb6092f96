#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "ppde/errors.hpp"
#include "ppde/sde.hpp"

namespace ppde {

static_assert(std::endian::native == std::endian::little,
              "ensemble files are little-endian; big-endian hosts need byte swaps");

/// Binary ensemble file: header {magic "PPDE", version u32, dim_h u32,
/// n_steps u32, n_paths u64, seed u64, t f64, T f64}, then each path's
/// (n_steps+1) x dim_h doubles, node-major.  All integers little-endian.
struct EnsembleHeader {
    std::uint32_t version = 1;
    std::uint32_t dim_h = 0;
    std::uint32_t n_steps = 0;
    std::uint64_t n_paths = 0;
    std::uint64_t seed = 0;
    double t = 0.0;
    double horizon = 0.0;
};

inline void write_ensemble(const std::string& file, const PathEnsemble& ens) {
    if (ens.paths.empty()) throw NumericalError("write_ensemble: empty ensemble");
    const auto& first = ens.paths.front();
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw NumericalError("write_ensemble: cannot open " + file);

    const char magic[4] = {'P', 'P', 'D', 'E'};
    out.write(magic, 4);
    auto put32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
    auto put64 = [&](std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); };
    auto putf = [&](double v) { out.write(reinterpret_cast<const char*>(&v), 8); };
    put32(1u);
    put32(static_cast<std::uint32_t>(first.dim_h));
    put32(static_cast<std::uint32_t>(first.n_steps));
    put64(static_cast<std::uint64_t>(ens.paths.size()));
    put64(ens.seed);
    putf(ens.t0);
    putf(first.horizon);
    for (const auto& path : ens.paths)
        out.write(reinterpret_cast<const char*>(path.values.data()),
                  static_cast<std::streamsize>(path.values.size() * sizeof(double)));
    if (!out) throw NumericalError("write_ensemble: write failed for " + file);
}

inline std::pair<EnsembleHeader, std::vector<DiscretePath>> read_ensemble(const std::string& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw NumericalError("read_ensemble: cannot open " + file);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "PPDE", 4) != 0)
        throw NumericalError("read_ensemble: bad magic in " + file);

    EnsembleHeader h;
    auto get32 = [&](std::uint32_t& v) { in.read(reinterpret_cast<char*>(&v), 4); };
    auto get64 = [&](std::uint64_t& v) { in.read(reinterpret_cast<char*>(&v), 8); };
    auto getf = [&](double& v) { in.read(reinterpret_cast<char*>(&v), 8); };
    get32(h.version);
    get32(h.dim_h);
    get32(h.n_steps);
    get64(h.n_paths);
    get64(h.seed);
    getf(h.t);
    getf(h.horizon);
    if (!in || h.version != 1) throw NumericalError("read_ensemble: unsupported header in " + file);

    std::vector<DiscretePath> paths;
    paths.reserve(h.n_paths);
    for (std::uint64_t i = 0; i < h.n_paths; ++i) {
        DiscretePath p(static_cast<int>(h.dim_h), static_cast<int>(h.n_steps), h.horizon);
        in.read(reinterpret_cast<char*>(p.values.data()),
                static_cast<std::streamsize>(p.values.size() * sizeof(double)));
        if (!in) throw NumericalError("read_ensemble: truncated file " + file);
        paths.push_back(std::move(p));
    }
    return {h, std::move(paths)};
}

} // namespace ppde
