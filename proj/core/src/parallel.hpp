#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace fav::detail {

// Splits [0, n) into fixed chunks independent of the worker count, runs
// fn(chunk, begin, end) for each, and leaves per-chunk results for the caller to
// merge in chunk order. The merged result is therefore identical for any `threads`.
template <class Fn>
void chunked_for(std::size_t n, int threads, std::size_t chunks, Fn&& fn) {
    if (n == 0) return;
    chunks = std::max<std::size_t>(1, std::min(chunks, n));
    const auto bounds = [&](std::size_t c) { return c * n / chunks; };
    const std::size_t workers = static_cast<std::size_t>(std::max(1, threads));
    if (workers == 1) {
        for (std::size_t c = 0; c < chunks; ++c) fn(c, bounds(c), bounds(c + 1));
        return;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t c = w; c < chunks; c += workers) fn(c, bounds(c), bounds(c + 1));
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace fav::detail
