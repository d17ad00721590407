#pragma once

#include "w2dual/common.hpp"

#include <cmath>
#include <cstdint>

namespace w2dual {

/// Cosine annealing with a *relative* floor: lr(step) =
/// lr_init·(floor + (1−floor)·½(1+cos(π·step/n_iters))).
inline double cosine_lr(std::int64_t step, std::int64_t n_iters, double lr_init,
                        double floor_fraction = 1e-4) {
    if (step < 0 || step > n_iters) throw ConfigError("cosine_lr: step outside [0, n_iters]");
    double c = 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(step) / static_cast<double>(n_iters)));
    return lr_init * (floor_fraction + (1.0 - floor_fraction) * c);
}

/// Cosine annealing between two *absolute* rates (conjugate Adam schedule).
inline double cosine_lr_between(std::int64_t step, std::int64_t n_iters, double lr_init,
                                double lr_end) {
    double c = 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(step) / static_cast<double>(n_iters)));
    return lr_end + (lr_init - lr_end) * c;
}

/// Adam with bias correction over a flat parameter vector.
class Adam {
public:
    Adam() = default;
    explicit Adam(Eigen::Index n) : m_(Vector::Zero(n)), v_(Vector::Zero(n)) {}

    void step(Vector& params, const Vector& grad, double lr, double beta1, double beta2,
              double eps = 1e-8) {
        if (params.size() != m_.size() || grad.size() != m_.size())
            throw DimensionError("Adam::step: buffer size mismatch");
        ++t_;
        m_ = beta1 * m_ + (1.0 - beta1) * grad;
        v_ = beta2 * v_ + (1.0 - beta2) * grad.cwiseProduct(grad);
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
        params.array() -=
            lr * (m_.array() / bc1) / ((v_.array() / bc2).sqrt() + eps);
    }

    std::int64_t t() const { return t_; }
    const Vector& m() const { return m_; }
    const Vector& v() const { return v_; }
    void restore(const Vector& m, const Vector& v, std::int64_t t) {
        if (m.size() != m_.size() || v.size() != v_.size())
            throw DimensionError("Adam::restore: buffer size mismatch");
        m_ = m;
        v_ = v;
        t_ = t;
    }

private:
    Vector m_, v_;
    std::int64_t t_ = 0;
};

}  // namespace w2dual
