#pragma once

#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace mesoflow {

/// Global worker count for data-parallel loops. 0 means "all cores".
/// Results are bit-identical for any thread count: work is split into
/// fixed-size chunks and all reductions combine chunks in index order.
int thread_count();
void set_thread_count(int n);

namespace detail {
inline int& thread_count_ref() {
    static int n = 0;
    return n;
}
} // namespace detail

inline int thread_count() {
    int n = detail::thread_count_ref();
    if (n > 0) return n;
    const char* env = std::getenv("MESOFLOW_THREADS");
    if (env) {
        const int e = std::atoi(env);
        if (e > 0) return e;
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? static_cast<int>(hc) : 1;
}

inline void set_thread_count(int n) { detail::thread_count_ref() = n; }

/// Runs fn(begin, end) over fixed 1024-element chunks, possibly on
/// several threads. Chunk boundaries do not depend on the thread count.
template <typename Fn>
void parallel_for_chunks(std::size_t n, Fn&& fn) {
    constexpr std::size_t kChunk = 1024;
    const int threads = thread_count();
    const std::size_t nchunks = (n + kChunk - 1) / kChunk;
    if (threads <= 1 || nchunks <= 1) {
        for (std::size_t c = 0; c < nchunks; ++c)
            fn(c * kChunk, std::min(n, (c + 1) * kChunk));
        return;
    }
    std::vector<std::thread> pool;
    const int used = static_cast<int>(std::min<std::size_t>(threads, nchunks));
    pool.reserve(used);
    for (int t = 0; t < used; ++t) {
        pool.emplace_back([&, t]() {
            for (std::size_t c = t; c < nchunks; c += used)
                fn(c * kChunk, std::min(n, (c + 1) * kChunk));
        });
    }
    for (auto& th : pool) th.join();
}

/// Deterministic sum of fn(i) over i in [0, n): per-chunk partial sums
/// are accumulated in chunk order regardless of threading.
template <typename Fn>
double parallel_sum(std::size_t n, Fn&& fn) {
    constexpr std::size_t kChunk = 1024;
    const std::size_t nchunks = (n + kChunk - 1) / kChunk;
    std::vector<double> partial(nchunks, 0.0);
    parallel_for_chunks(n, [&](std::size_t begin, std::size_t end) {
        double s = 0.0;
        for (std::size_t i = begin; i < end; ++i) s += fn(i);
        partial[begin / kChunk] = s;
    });
    double total = 0.0;
    for (double s : partial) total += s;
    return total;
}

} // namespace mesoflow
