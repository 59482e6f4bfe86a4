#pragma once

#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace uegan {

struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ContractError : std::logic_error {
    explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ParseError : std::runtime_error {
    ParseError(const std::string& msg, std::size_t offset)
        : std::runtime_error(msg + " (byte offset " + std::to_string(offset) + ")"),
          byte_offset(offset) {}
    std::size_t byte_offset;
};

/// Deterministic RNG wrapper. All draws go through explicit helpers so the
/// stream consumed per call site is fixed.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(static_cast<std::mt19937::result_type>(seed)) {}

    uint32_t next_u32() { return gen_(); }

    double uniform() {
        // 24-bit mantissa draw, stable across standard library versions.
        return (next_u32() >> 8) * (1.0 / 16777216.0);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Inclusive integer range.
    int randint(int lo, int hi) {
        return lo + static_cast<int>(next_u32() % static_cast<uint32_t>(hi - lo + 1));
    }

    bool bernoulli(double p) { return uniform() < p; }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do { u1 = uniform(); } while (u1 <= 1e-12);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

private:
    std::mt19937 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

namespace detail {
inline unsigned worker_count() {
    unsigned n = std::thread::hardware_concurrency();
    if (n == 0) n = 1;
    return n > 8 ? 8 : n;
}
}  // namespace detail

/// Persistent worker pool for the conv/gemm hot path. Chunks are assigned by
/// atomic fetch-add, so which worker runs a chunk varies, but every index is
/// handled exactly once and results are independent of the worker count.
class ThreadPool {
public:
    static ThreadPool& instance() {
        static ThreadPool pool(detail::worker_count());
        return pool;
    }

    void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body) {
        if (n == 0) return;
        if (n < 2 || workers_.empty()) {
            body(0, n);
            return;
        }
        std::size_t chunks = (workers_.size() + 1) * 2;
        chunk_size_ = (n + chunks - 1) / chunks;
        if (chunk_size_ == 0) chunk_size_ = 1;
        task_ = &body;
        total_ = n;
        next_.store(0, std::memory_order_relaxed);
        pending_.store(static_cast<int>(workers_.size()), std::memory_order_relaxed);
        {
            std::lock_guard<std::mutex> lock(mu_);
            ++generation_;
        }
        cv_.notify_all();
        run_chunks();
        std::unique_lock<std::mutex> lock(mu_);
        done_cv_.wait(lock, [this] { return pending_.load(std::memory_order_acquire) == 0; });
        task_ = nullptr;
    }

    ~ThreadPool() {
        {
            std::lock_guard<std::mutex> lock(mu_);
            stop_ = true;
            ++generation_;
        }
        cv_.notify_all();
        for (auto& t : workers_) t.join();
    }

private:
    explicit ThreadPool(unsigned count) {
        for (unsigned i = 0; i + 1 < count; ++i) {
            workers_.emplace_back([this] { worker_loop(); });
        }
    }

    void run_chunks() {
        const auto* task = task_;
        std::size_t n = total_;
        for (;;) {
            std::size_t lo = next_.fetch_add(chunk_size_, std::memory_order_relaxed);
            if (lo >= n) break;
            std::size_t hi = lo + chunk_size_ < n ? lo + chunk_size_ : n;
            (*task)(lo, hi);
        }
    }

    void worker_loop() {
        uint64_t seen = 0;
        for (;;) {
            {
                std::unique_lock<std::mutex> lock(mu_);
                cv_.wait(lock, [this, seen] { return stop_ || generation_ != seen; });
                if (stop_) return;
                seen = generation_;
            }
            run_chunks();
            if (pending_.fetch_sub(1, std::memory_order_acq_rel) == 1) {
                std::lock_guard<std::mutex> lock(mu_);
                done_cv_.notify_all();
            }
        }
    }

    std::vector<std::thread> workers_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::condition_variable done_cv_;
    uint64_t generation_ = 0;
    bool stop_ = false;
    const std::function<void(std::size_t, std::size_t)>* task_ = nullptr;
    std::size_t total_ = 0;
    std::size_t chunk_size_ = 1;
    std::atomic<std::size_t> next_{0};
    std::atomic<int> pending_{0};
};

inline void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body) {
    ThreadPool::instance().parallel_for(n, body);
}

}  // namespace uegan
