#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pwm {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Bad input data (dimension mismatch, asymmetric matrix, NaN sample, ...).
class InputError : public Error {
public:
    using Error::Error;
};

// A structural invariant of a path/tree was violated.
class StructureError : public Error {
public:
    using Error::Error;
};

// splitmix64, the usual seed-expansion step.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Per-path stream key. Each simulated path seeds its own generator from
// (ensemble seed, path id); results are independent of evaluation order.
inline std::uint64_t path_stream_seed(std::uint64_t seed, std::uint64_t path_id) {
    return splitmix64(seed ^ splitmix64(path_id + 1));
}

// Pairwise (cascade) summation. Order-fixed, so reductions give the same
// bits whether the per-sample work ran serially or across threads.
double pairwise_sum(std::span<const double> x);

// Number of OpenMP threads to use, honoring PIECEWISE_MARKET_THREADS.
int max_threads();

// Collects the first exception thrown inside a parallel loop body so it
// can be rethrown after the join (exceptions must not cross an OpenMP
// region boundary).
class ParallelErrorCollector {
public:
    template <typename F>
    void run(F&& f) noexcept {
        if (failed_.load(std::memory_order_relaxed)) return;
        try {
            f();
        } catch (...) {
            const std::lock_guard<std::mutex> lock(mu_);
            if (!err_) err_ = std::current_exception();
            failed_.store(true, std::memory_order_relaxed);
        }
    }
    void rethrow() {
        if (failed_.load()) std::rethrow_exception(err_);
    }

private:
    std::atomic<bool> failed_{false};
    std::mutex mu_;
    std::exception_ptr err_;
};

}  // namespace pwm
