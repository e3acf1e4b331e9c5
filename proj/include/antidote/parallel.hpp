#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace antidote {

/// Runs fn(i) for i in [0, n) on at most `budget` threads. Results must be
/// written to per-index slots by the caller so output order never depends on
/// scheduling. The first exception (lowest index) is rethrown after all
/// workers join.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t budget, Fn&& fn) {
    budget = std::max<std::size_t>(1, std::min(budget, n));
    if (budget <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::jthread> threads;
    threads.reserve(budget);
    for (std::size_t t = 0; t < budget; ++t) threads.emplace_back(worker);
    threads.clear();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace antidote
