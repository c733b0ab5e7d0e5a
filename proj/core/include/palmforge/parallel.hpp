#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <functional>
#include <thread>
#include <vector>

namespace palmforge {

// PALMFORGE_THREADS wins over hardware concurrency; always at least 1.
inline int thread_count() {
    if (const char* env = std::getenv("PALMFORGE_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc ? static_cast<int>(hc) : 1;
}

// Runs fn(0..n-1), possibly concurrently. Work items must be independent;
// callers that need a reduction do it afterwards in index order so the
// outcome never depends on how many threads ran.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const int workers =
        static_cast<int>(std::min(static_cast<std::size_t>(thread_count()), n));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace palmforge
