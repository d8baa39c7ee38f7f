#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace mdlreg {

inline unsigned default_threads() {
    unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : n;
}

// Runs fn(i) for i in [0, count) on up to `threads` workers and returns the
// results indexed by i. Every result lands in its own slot and any reduction
// is done by the caller in index order, so the outcome does not depend on
// how tasks were scheduled.
template <typename R, typename Fn>
std::vector<R> parallel_tasks(std::size_t count, unsigned threads, Fn&& fn) {
    std::vector<R> out(count);
    if (count == 0) return out;
    const unsigned workers =
        std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(count)));
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) out[i] = fn(i);
        return out;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto body = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                out[i] = fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(body);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
    return out;
}

}  // namespace mdlreg
