#pragma once

#include "w2dual/common.hpp"

#include <cmath>
#include <cstdint>

namespace w2dual {

// Counter-based generator: every draw is a pure hash of (seed, stream, counter),
// so sampling is reproducible independent of evaluation order and batch size
// (row i of a batch reads the same counters no matter how many rows follow it).
namespace detail {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}
}  // namespace detail

class Stream {
public:
    explicit Stream(std::uint64_t seed, std::uint64_t stream = 0)
        : key_(detail::mix64(detail::mix64(seed + detail::kGolden) ^
                             (stream * detail::kGolden + 0xD1B54A32D192ED03ULL))) {}

    /// Derive an independent sub-stream (e.g. one per training step).
    Stream fork(std::uint64_t substream) const { return Stream(key_, substream); }

    std::uint64_t bits(std::uint64_t counter) const {
        return detail::mix64(key_ + (counter + 1) * detail::kGolden);
    }

    /// Uniform on [0, 1)
    double uniform(std::uint64_t counter) const {
        return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
    }

    /// Uniform on (0, 1] — safe as a log() argument.
    double uniform_oc(std::uint64_t counter) const {
        return static_cast<double>((bits(counter) >> 11) + 1) * 0x1.0p-53;
    }

    /// Unbiased-enough integer in [0, bound) via 128-bit multiply.
    std::uint64_t below(std::uint64_t counter, std::uint64_t bound) const {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(bits(counter)) * bound) >> 64);
    }

private:
    std::uint64_t key_;
};

/// Sequential draw helper over a Stream; each row of a batch gets its own
/// cursor range so rows are independent of batch composition.
class Cursor {
public:
    Cursor(const Stream& g, std::uint64_t start) : g_(&g), c_(start) {}

    double uniform() { return g_->uniform(c_++); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    std::uint64_t below(std::uint64_t bound) { return g_->below(c_++, bound); }

    /// Standard normal via Box–Muller (cosine branch); consumes two counters.
    double normal() {
        double u1 = g_->uniform_oc(c_++);
        double u2 = g_->uniform(c_++);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

private:
    const Stream* g_;
    std::uint64_t c_;
};

inline Batch normal_batch(const Stream& g, Eigen::Index n, Eigen::Index dim) {
    Batch out(n, dim);
    for (Eigen::Index i = 0; i < n; ++i) {
        Cursor cur(g, static_cast<std::uint64_t>(i) * 2 * dim);
        for (Eigen::Index j = 0; j < dim; ++j) out(i, j) = cur.normal();
    }
    return out;
}

inline Batch uniform_batch(const Stream& g, Eigen::Index n, Eigen::Index dim,
                           double lo, double hi) {
    Batch out(n, dim);
    for (Eigen::Index i = 0; i < n; ++i) {
        Cursor cur(g, static_cast<std::uint64_t>(i) * dim);
        for (Eigen::Index j = 0; j < dim; ++j) out(i, j) = cur.uniform(lo, hi);
    }
    return out;
}

}  // namespace w2dual
