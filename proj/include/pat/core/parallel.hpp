/* SPDX-License-Identifier: Apache-2.0 */

#pragma once

#include <cstddef>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace pat {

/// Number of worker threads honoring the process CPU affinity mask.
inline unsigned worker_count() {
    unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1u : n;
}

/// Runs fn(i) for i in [begin, end). Work is split into fixed-size chunks so
/// the assignment of indices to chunks does not depend on the thread count;
/// callers that write disjoint outputs per index get bit-identical results
/// for any worker count.
template <typename Fn>
void parallel_for(std::size_t begin, std::size_t end, Fn&& fn) {
    const std::size_t total = end > begin ? end - begin : 0;
    if (total == 0) return;
    const unsigned workers = worker_count();
    if (workers <= 1 || total == 1) {
        for (std::size_t i = begin; i < end; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    std::exception_ptr error;
    std::mutex errorLock;
    std::size_t chunk = (total + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
        std::size_t lo = begin + w * chunk;
        std::size_t hi = lo + chunk < end ? lo + chunk : end;
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn, &error, &errorLock] {
            try {
                for (std::size_t i = lo; i < hi; ++i) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> g(errorLock);
                if (!error) error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

/// Chunked variant: fn(chunkIndex, lo, hi) over fixed-size blocks. Chunk
/// boundaries depend only on blockSize, so per-chunk partial results can be
/// reduced in chunk order for a deterministic total.
template <typename Fn>
void parallel_chunks(std::size_t begin, std::size_t end, std::size_t blockSize, Fn&& fn) {
    if (end <= begin) return;
    std::size_t nChunks = (end - begin + blockSize - 1) / blockSize;
    parallel_for(0, nChunks, [&](std::size_t c) {
        std::size_t lo = begin + c * blockSize;
        std::size_t hi = lo + blockSize < end ? lo + blockSize : end;
        fn(c, lo, hi);
    });
}

} // namespace pat
