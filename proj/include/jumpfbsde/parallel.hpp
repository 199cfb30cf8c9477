#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace jumpfbsde {

/// Paths are always processed in fixed blocks of this size. Reductions sum
/// per-block partials in block order, so results do not depend on the
/// number of worker threads.
inline constexpr std::size_t kPathBlock = 512;

inline std::size_t block_count(std::size_t n) { return (n + kPathBlock - 1) / kPathBlock; }

/// Runs body(block_index, begin, end) for every block of [0, n).
/// The first exception thrown by any block is rethrown on the caller.
template <class Body>
void parallel_blocks(std::size_t n, unsigned threads, Body&& body) {
    const std::size_t blocks = block_count(n);
    const auto run_block = [&](std::size_t b) {
        const std::size_t begin = b * kPathBlock;
        body(b, begin, std::min(n, begin + kPathBlock));
    };
    if (threads <= 1 || blocks <= 1) {
        for (std::size_t b = 0; b < blocks; ++b) run_block(b);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    const auto worker = [&] {
        for (;;) {
            const std::size_t b = next.fetch_add(1);
            if (b >= blocks) return;
            try {
                run_block(b);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                next.store(blocks);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    const auto count = std::min<std::size_t>(threads, blocks);
    pool.reserve(count);
    for (std::size_t i = 0; i < count; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

/// Per-index loop on top of parallel_blocks.
template <class Body>
void parallel_for(std::size_t n, unsigned threads, Body&& body) {
    parallel_blocks(n, threads, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t p = begin; p < end; ++p) body(p);
    });
}

}  // namespace jumpfbsde
