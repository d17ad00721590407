#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace w2dual {

// Batches hold one sample per row. Row-major keeps each sample contiguous,
// which the per-row kernels in layers.hpp depend on.
using Batch = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
// Kernels are (in x out); row-major makes K.row(k) contiguous for axpy loops.
using Kernel = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Invalid user-facing configuration (unknown task, bad key, rejected combination).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Non-finite values encountered where the contract requires finite ones.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Shape or contract violation between composed components.
class DimensionError : public std::logic_error {
public:
    explicit DimensionError(const std::string& msg) : std::logic_error(msg) {}
};

/// Compensated (Kahan) sum; keeps batch reductions deterministic and accurate
/// for a fixed row order.
inline double kahan_sum(const double* xs, std::ptrdiff_t n) {
    double sum = 0.0, c = 0.0;
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        double y = xs[i] - c;
        double t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    return sum;
}

inline double kahan_sum(const Vector& v) { return kahan_sum(v.data(), v.size()); }

inline double kahan_mean(const Vector& v) {
    if (v.size() == 0) throw DimensionError("kahan_mean: empty vector");
    return kahan_sum(v) / static_cast<double>(v.size());
}

inline bool all_finite(const Eigen::Ref<const Batch>& m) { return m.allFinite(); }

}  // namespace w2dual
