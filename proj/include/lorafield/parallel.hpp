#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <thread>
#include <vector>

namespace lorafield {

inline int default_thread_count() {
    if (const char* env = std::getenv("LORAFIELD_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) return n;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(std::min(hw, 8u));
}

inline int& thread_count() {
    static int count = default_thread_count();
    return count;
}

inline void set_thread_count(int n) { thread_count() = std::max(1, n); }

// Splits [0, n) into contiguous chunks, one worker per chunk. Each index is
// handled by exactly one worker, so per-element arithmetic order does not
// depend on the thread count. `grain` is the minimum chunk size worth a
// thread; below it the body runs inline.
template <typename Body>
void parallel_for(std::size_t n, std::size_t grain, Body&& body) {
    if (n == 0) return;
    grain = std::max<std::size_t>(grain, 1);
    std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(thread_count()), n / grain);
    if (workers <= 1) {
        body(std::size_t{0}, n);
        return;
    }
    std::size_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (std::size_t w = 1; w < workers; ++w) {
        std::size_t begin = w * chunk;
        std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&body, begin, end] { body(begin, end); });
    }
    body(std::size_t{0}, std::min(chunk, n));
    for (auto& t : pool) t.join();
}

} // namespace lorafield
