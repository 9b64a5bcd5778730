#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "random.hpp"

namespace pdmp {

/// Worker count: PDMP_THREADS if set to a positive integer, else the hardware concurrency.
inline unsigned worker_count() {
    if (const char* env = std::getenv("PDMP_THREADS")) {
        try {
            long v = std::stol(env);
            if (v > 0) return static_cast<unsigned>(v);
        } catch (...) {
        }
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

/// Runs f(i, rng) for i in [0, n) with rng = Stream(seed, i) and returns the results in index
/// order. Results do not depend on the number of workers.
template <class F>
auto run_replicas(std::size_t n, std::uint64_t seed, F&& f) {
    using R = decltype(f(std::size_t{}, std::declval<Stream&>()));
    std::vector<R> out(n);
    unsigned workers = std::min<std::size_t>(worker_count(), std::max<std::size_t>(n, 1));
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::size_t error_index = n;
    std::mutex mu;
    const std::size_t chunk = 64;
    auto body = [&]() {
        for (;;) {
            std::size_t lo = next.fetch_add(chunk);
            if (lo >= n) return;
            std::size_t hi = std::min(n, lo + chunk);
            for (std::size_t i = lo; i < hi; ++i) {
                try {
                    Stream rng(seed, i);
                    out[i] = f(i, rng);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(mu);
                    if (i < error_index) {
                        error_index = i;
                        error = std::current_exception();
                    }
                    return;
                }
            }
        }
    };
    if (workers <= 1) {
        body();
    } else {
        std::vector<std::thread> pool;
        for (unsigned k = 0; k < workers; ++k) pool.emplace_back(body);
        for (auto& t : pool) t.join();
    }
    if (error) std::rethrow_exception(error);
    return out;
}

}  // namespace pdmp
