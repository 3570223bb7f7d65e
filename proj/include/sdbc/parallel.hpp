#pragma once

#include <algorithm>
#include <thread>
#include <vector>

namespace sdbc {

/// Worker count used by the solvers; 1 by default.
int thread_count();
void set_thread_count(int n);

/// Runs fn(begin, end) over contiguous blocks of [0, n). Blocks never share
/// an index, so results do not depend on the worker count.
template <typename Fn>
void parallel_blocks(int n, Fn&& fn, int min_block = 8) {
    const int workers = std::min(thread_count(), std::max(1, n / std::max(1, min_block)));
    if (workers <= 1) {
        fn(0, n);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const int chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
        const int b = w * chunk;
        const int e = std::min(n, b + chunk);
        if (b >= e) break;
        pool.emplace_back([&fn, b, e] { fn(b, e); });
    }
    for (auto& t : pool) t.join();
}

}  // namespace sdbc
