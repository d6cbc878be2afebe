#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace gasket {

namespace detail {
inline int& thread_override() {
    static int n = 0;
    return n;
}
}  // namespace detail

/// Number of worker threads: explicit override, then GASKET_THREADS, then hardware.
inline int thread_count() {
    if (detail::thread_override() > 0) return detail::thread_override();
    if (const char* env = std::getenv("GASKET_THREADS")) {
        try {
            int n = std::stoi(env);
            if (n > 0) return n;
        } catch (...) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

inline void set_thread_count(int n) { detail::thread_override() = n; }

/// Splits [0, n) into `chunks` contiguous ranges in order.
inline std::vector<std::pair<std::size_t, std::size_t>> fixed_chunks(std::size_t n, std::size_t chunks) {
    chunks = std::max<std::size_t>(1, std::min(chunks, n == 0 ? 1 : n));
    std::vector<std::pair<std::size_t, std::size_t>> out;
    out.reserve(chunks);
    for (std::size_t c = 0; c < chunks; ++c)
        out.emplace_back(n * c / chunks, n * (c + 1) / chunks);
    return out;
}

/// Runs `body(begin, end, chunk_index)` over a fixed chunking of [0, n).
/// The chunking depends only on `chunks`, never on the thread count, so
/// per-chunk partial results reduced in chunk order are reproducible.
template <class Body>
void parallel_chunks(std::size_t n, std::size_t chunks, Body&& body) {
    const auto ranges = fixed_chunks(n, chunks);
    const int workers = std::min<int>(thread_count(), static_cast<int>(ranges.size()));
    if (workers <= 1) {
        for (std::size_t c = 0; c < ranges.size(); ++c) body(ranges[c].first, ranges[c].second, c);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t c = w; c < ranges.size(); c += workers)
                body(ranges[c].first, ranges[c].second, c);
        });
    }
    for (auto& t : pool) t.join();
}

/// Pairwise summation; the result depends only on the order of `v`.
inline double pairwise_sum(const double* v, std::size_t n) {
    if (n <= 16) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += v[i];
        return s;
    }
    const std::size_t h = n / 2;
    return pairwise_sum(v, h) + pairwise_sum(v + h, n - h);
}

inline double pairwise_sum(const std::vector<double>& v) { return pairwise_sum(v.data(), v.size()); }

}  // namespace gasket
