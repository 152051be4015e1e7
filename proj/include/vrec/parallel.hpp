#pragma once

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <cstring>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace vrec {

/// How work is split and reduced. Chunk boundaries are fixed by `chunk`
/// alone, never by the thread count, so per-chunk results can be merged in
/// chunk order and the result is identical for any number of workers.
struct ParallelConfig {
    int threads = 1;
    bool deterministic = true;
};

inline int64_t chunk_count(int64_t n, int64_t chunk) {
    return chunk <= 0 ? 0 : (n + chunk - 1) / chunk;
}

/// Runs fn(begin, end) over [0, n) in chunks. Chunks may execute in any order
/// and must write to disjoint outputs.
inline void parallel_for_chunks(int64_t n, int64_t chunk, int threads,
                                const std::function<void(int64_t, int64_t)>& fn) {
    int64_t nchunks = chunk_count(n, chunk);
    if (nchunks == 0) return;
    if (threads <= 1 || nchunks == 1) {
        for (int64_t c = 0; c < nchunks; ++c)
            fn(c * chunk, std::min(n, (c + 1) * chunk));
        return;
    }
    std::atomic<int64_t> next{0};
    auto worker = [&] {
        for (;;) {
            int64_t c = next.fetch_add(1);
            if (c >= nchunks) return;
            fn(c * chunk, std::min(n, (c + 1) * chunk));
        }
    };
    std::vector<std::thread> pool;
    int nworkers = static_cast<int>(std::min<int64_t>(threads, nchunks));
    pool.reserve(nworkers - 1);
    for (int i = 0; i + 1 < nworkers; ++i) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
}

/// Produce/merge pipeline with a fixed merge order. Workers call
/// produce(chunk, begin, end, slot) into one of `slots` private buffers; the
/// calling thread merges each chunk in ascending order with
/// merge(chunk, slot). A slot is reused only after its previous chunk has
/// been merged, which bounds memory at `slots` buffers in flight.
inline void ordered_chunked_run(int64_t n, int64_t chunk, int threads, int slots,
                                const std::function<void(int64_t, int64_t, int64_t, int)>& produce,
                                const std::function<void(int64_t, int)>& merge) {
    int64_t nchunks = chunk_count(n, chunk);
    if (nchunks == 0) return;
    if (threads <= 1 || nchunks == 1 || slots <= 1) {
        for (int64_t c = 0; c < nchunks; ++c) {
            produce(c, c * chunk, std::min(n, (c + 1) * chunk), 0);
            merge(c, 0);
        }
        return;
    }

    std::mutex mu;
    std::condition_variable cv_done, cv_free;
    std::vector<char> done(static_cast<std::size_t>(nchunks), 0);
    int64_t merged = 0;
    std::atomic<int64_t> next{0};

    auto worker = [&] {
        for (;;) {
            int64_t c = next.fetch_add(1);
            if (c >= nchunks) return;
            {
                // Wait until the slot's previous occupant has been merged.
                std::unique_lock<std::mutex> lock(mu);
                cv_free.wait(lock, [&] { return c - merged < slots; });
            }
            produce(c, c * chunk, std::min(n, (c + 1) * chunk), static_cast<int>(c % slots));
            {
                std::lock_guard<std::mutex> lock(mu);
                done[static_cast<std::size_t>(c)] = 1;
            }
            cv_done.notify_all();
        }
    };

    std::vector<std::thread> pool;
    int nworkers = static_cast<int>(std::min<int64_t>(threads, nchunks));
    for (int i = 0; i < nworkers; ++i) pool.emplace_back(worker);

    for (int64_t c = 0; c < nchunks; ++c) {
        {
            std::unique_lock<std::mutex> lock(mu);
            cv_done.wait(lock, [&] { return done[static_cast<std::size_t>(c)] != 0; });
        }
        merge(c, static_cast<int>(c % slots));
        {
            std::lock_guard<std::mutex> lock(mu);
            merged = c + 1;
        }
        cv_free.notify_all();
    }
    for (auto& t : pool) t.join();
}

/// Lock-free float add for the fast (non-deterministic) scatter mode.
inline void atomic_add(float* target, float value) {
    auto* cell = reinterpret_cast<std::atomic<uint32_t>*>(target);
    uint32_t expected = cell->load(std::memory_order_relaxed);
    for (;;) {
        float current;
        std::memcpy(&current, &expected, sizeof current);
        float updated = current + value;
        uint32_t desired;
        std::memcpy(&desired, &updated, sizeof desired);
        if (cell->compare_exchange_weak(expected, desired, std::memory_order_relaxed)) return;
    }
}

inline void atomic_add(double* target, double value) {
    auto* cell = reinterpret_cast<std::atomic<uint64_t>*>(target);
    uint64_t expected = cell->load(std::memory_order_relaxed);
    for (;;) {
        double current;
        std::memcpy(&current, &expected, sizeof current);
        double updated = current + value;
        uint64_t desired;
        std::memcpy(&desired, &updated, sizeof desired);
        if (cell->compare_exchange_weak(expected, desired, std::memory_order_relaxed)) return;
    }
}

}  // namespace vrec
