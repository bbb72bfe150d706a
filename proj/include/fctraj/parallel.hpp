#pragma once

#include <atomic>
#include <exception>
#include <thread>
#include <vector>

namespace fctraj {

// Index-ordered parallel map: results land by input position, so the output
// does not depend on scheduling. The first exception (lowest index) rethrows.
template <typename In, typename Fn>
auto parallel_map(const std::vector<In>& items, size_t jobs, Fn&& fn)
    -> std::vector<decltype(fn(items[0], size_t{0}))> {
    using Out = decltype(fn(items[0], size_t{0}));
    std::vector<Out> results(items.size());
    if (items.empty()) return results;
    jobs = std::max<size_t>(1, std::min(jobs, items.size()));
    if (jobs == 1) {
        for (size_t i = 0; i < items.size(); ++i) results[i] = fn(items[i], i);
        return results;
    }
    std::vector<std::exception_ptr> errors(items.size());
    std::atomic<size_t> next{0};
    std::vector<std::thread> workers;
    workers.reserve(jobs);
    for (size_t w = 0; w < jobs; ++w) {
        workers.emplace_back([&] {
            for (;;) {
                size_t i = next.fetch_add(1);
                if (i >= items.size()) return;
                try {
                    results[i] = fn(items[i], i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : workers) t.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return results;
}

}  // namespace fctraj
