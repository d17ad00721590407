#pragma once

// Amortization losses for the conjugate-prediction model x̃_φ: pick the
// prediction that minimizes the conjugation objective directly (objective),
// zero the first-order stationarity residual (cycle), or regress onto
// fine-tuned solver outputs (regression). The potential's parameters are
// constants here — no gradient reaches θ unless the cycle loss is explicitly
// asked to couple them.

#include <cmath>
#include <string>

#include "w2dual/common.hpp"
#include "w2dual/potentials.hpp"

namespace w2dual {

enum class AmortLoss { objective, cycle, regression };

inline AmortLoss parse_amort_loss(const std::string& name) {
    if (name == "objective") return AmortLoss::objective;
    if (name == "cycle") return AmortLoss::cycle;
    if (name == "regression") return AmortLoss::regression;
    throw ConfigError("unknown amortization loss: " + name);
}

inline std::string amort_loss_name(AmortLoss kind) {
    switch (kind) {
        case AmortLoss::objective: return "objective";
        case AmortLoss::cycle: return "cycle";
        case AmortLoss::regression: return "regression";
    }
    throw ConfigError("amort_loss_name: bad enum value");
}

struct AmortEval {
    double loss = 0.0;
    Batch prediction;        // x̃_φ(y), reusable as solver warm starts
    ParamVector phi_grad;    // ∂loss/∂φ
    ParamVector theta_grad;  // zero unless cycle loss with connect_potential

    AmortEval(LayoutPtr phi_layout, LayoutPtr theta_layout)
        : phi_grad(std::move(phi_layout)), theta_grad(std::move(theta_layout)) {}
};

namespace detail {

inline Vector row_sq_norms(const Batch& m) {
    Vector out(m.rows());
    for (Eigen::Index i = 0; i < m.rows(); ++i) out(i) = m.row(i).squaredNorm();
    return out;
}

}  // namespace detail

/// Loss value and gradients for one amortizer update. x_star is required for
/// the regression loss (detached fine-tuned solutions) and ignored otherwise.
inline AmortEval amort_loss_grad(AmortLoss kind, const PotentialModel& f,
                                 const ParamVector& theta, const AmortModel& amort,
                                 const ParamVector& phi, const Eigen::Ref<const Batch>& y,
                                 const Batch* x_star = nullptr, bool connect_potential = false) {
    if (y.rows() < 1) throw ConfigError("amortization loss needs a non-empty batch");
    if (amort.dim() != y.cols() || f.dim() != y.cols())
        throw DimensionError("amortization loss: dimension mismatch");

    AmortEval out(amort.layout(), f.layout());
    amort.predict(phi, y, out.prediction);
    const double inv_b = 1.0 / static_cast<double>(y.rows());

    switch (kind) {
        case AmortLoss::objective: {
            Vector fv;
            Batch gx;
            f.value_grad(theta, out.prediction, fv, gx);
            Vector j = fv - QuadraticSkip::row_dots(out.prediction, y);
            out.loss = kahan_mean(j);
            Batch v = inv_b * (gx - y);
            amort.vjp(phi, y, v, &out.phi_grad, nullptr);
            break;
        }
        case AmortLoss::cycle: {
            Vector fv;
            Batch gx;
            f.value_grad(theta, out.prediction, fv, gx);
            Batch r = gx - y;
            out.loss = kahan_mean(detail::row_sq_norms(r));
            // d/dx ‖∇f(x) - y‖² = 2 ∇²f(x) r: one augmented reverse pass
            // yields the Hessian-vector product and, when coupling is on, the
            // matching ∂/∂θ Σ (2/B)⟨r_i, ∇f(x̃_i)⟩ term.
            Vector w = Vector::Constant(y.rows(), 2.0 * inv_b);
            Batch v = Batch::Zero(y.rows(), y.cols());
            f.backprop(theta, out.prediction, &r, nullptr, &w,
                       connect_potential ? &out.theta_grad : nullptr, &v);
            amort.vjp(phi, y, v, &out.phi_grad, nullptr);
            break;
        }
        case AmortLoss::regression: {
            if (!x_star)
                throw ConfigError("regression loss requires fine-tuned conjugate solutions");
            if (x_star->rows() != y.rows() || x_star->cols() != y.cols())
                throw DimensionError("regression loss: x_star shape mismatch");
            Batch d = out.prediction - *x_star;
            out.loss = kahan_mean(detail::row_sq_norms(d));
            Batch v = (2.0 * inv_b) * d;
            amort.vjp(phi, y, v, &out.phi_grad, nullptr);
            break;
        }
    }

    if (!std::isfinite(out.loss) || !out.phi_grad.values().allFinite() ||
        !out.theta_grad.values().allFinite())
        throw NumericalError("amortization loss produced non-finite values");
    return out;
}

// Value-only conveniences.

inline double loss_objective(const PotentialModel& f, const ParamVector& theta,
                             const AmortModel& amort, const ParamVector& phi,
                             const Eigen::Ref<const Batch>& y) {
    Batch pred = amort_predict(amort, phi, y);
    Vector fv;
    f.value(theta, pred, fv);
    Vector j = fv - QuadraticSkip::row_dots(pred, y);
    return kahan_mean(j);
}

inline double loss_cycle(const PotentialModel& f, const ParamVector& theta,
                         const AmortModel& amort, const ParamVector& phi,
                         const Eigen::Ref<const Batch>& y) {
    Batch pred = amort_predict(amort, phi, y);
    Vector fv;
    Batch gx;
    f.value_grad(theta, pred, fv, gx);
    return kahan_mean(detail::row_sq_norms(gx - y));
}

inline double loss_regression(const AmortModel& amort, const ParamVector& phi,
                              const Eigen::Ref<const Batch>& y, const Batch& x_star) {
    if (x_star.rows() != y.rows() || x_star.cols() != y.cols())
        throw DimensionError("loss_regression: x_star shape mismatch");
    Batch pred = amort_predict(amort, phi, y);
    return kahan_mean(detail::row_sq_norms(pred - x_star));
}

}  // namespace w2dual
