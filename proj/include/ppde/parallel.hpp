#pragma once

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace ppde {

/// Worker cap: explicit argument wins, otherwise the WORKERS environment
/// variable, otherwise 1.  Results never depend on the value; only wall-clock
/// time does.
inline int resolve_workers(int requested = 0) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("WORKERS")) {
        const int w = std::atoi(env);
        if (w > 0) return w;
    }
    return 1;
}

/// Runs fn(i) for i in [0, n) across at most `workers` threads in contiguous
/// chunks.  fn must write only to slot i of preallocated output.
template <typename Fn>
void parallel_for(std::int64_t n, int workers, Fn&& fn) {
    workers = std::max(1, std::min<std::int64_t>(workers, n) > 0
                              ? std::min(workers, static_cast<int>(std::min<std::int64_t>(workers, n)))
                              : 1);
    if (workers <= 1 || n <= 1) {
        for (std::int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    const std::int64_t chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        const std::int64_t lo = w * chunk;
        const std::int64_t hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&, w, lo, hi] {
            try {
                for (std::int64_t i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

} // namespace ppde
