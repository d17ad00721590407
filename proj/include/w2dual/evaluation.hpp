#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "w2dual/common.hpp"
#include "w2dual/conjugate.hpp"
#include "w2dual/measures.hpp"
#include "w2dual/potentials.hpp"
#include "w2dual/rng.hpp"

namespace w2dual {

/// Batched point map (rows in, rows out). AffineMap converts implicitly.
using MapFn = std::function<Batch(const Eigen::Ref<const Batch>&)>;

/// Transport map induced by a potential: x ↦ ∇f(x).
inline MapFn potential_map(std::shared_ptr<const PotentialModel> f, ParamVector p) {
    return [f = std::move(f), p = std::move(p)](const Eigen::Ref<const Batch>& x) {
        return grad_input(*f, p, x);
    };
}

// ---------------------------------------------------------------------------
// Unexplained variance percentage
// ---------------------------------------------------------------------------

struct UvpReport {
    double uvp_percent = 0.0;
    Eigen::Index n_samples = 0;
    double variance_beta = 0.0;  // total variance E‖y − Ey‖²
};

/// 100 · E_α‖T(x) − T*(x)‖² / Var(β), Monte-Carlo with n samples per measure.
/// Var(β) is the *total* variance (trace of the covariance), which makes the
/// constant map T ≡ E[β] score exactly 100% when T* pushes α onto β.
inline UvpReport l2_uvp(const MapFn& map, const MapFn& truth, const Sampler& alpha,
                        const Sampler& beta, Eigen::Index n, std::uint64_t seed) {
    if (n < 2) throw ConfigError("l2_uvp: need at least 2 samples");
    Stream derive(seed, 41);
    Batch x = alpha.sample(n, derive.bits(0));
    Batch y = beta.sample(n, derive.bits(1));

    Vector mean_y = y.colwise().mean();
    Vector dev(n);
    for (Eigen::Index i = 0; i < n; ++i) dev(i) = (y.row(i).transpose() - mean_y).squaredNorm();
    const double var_beta = kahan_mean(dev);
    if (var_beta < 1e-12)
        throw NumericalError("l2_uvp: beta measure is degenerate (total variance < 1e-12)");

    Batch diff = map(x) - truth(x);
    if (!diff.allFinite()) throw NumericalError("l2_uvp: non-finite map output");
    Vector sq(n);
    for (Eigen::Index i = 0; i < n; ++i) sq(i) = diff.row(i).squaredNorm();

    UvpReport rep;
    rep.n_samples = n;
    rep.variance_beta = var_beta;
    rep.uvp_percent = 100.0 * kahan_mean(sq) / var_beta;
    return rep;
}

// ---------------------------------------------------------------------------
// Brute-force grid conjugation oracle (1-D / 2-D)
// ---------------------------------------------------------------------------

namespace detail {

/// Row-major flattening of the axis-aligned square grid [lo,hi]^dim:
/// 2-D index (r, c) ↦ point (lo + c·h, lo + r·h), h = (hi−lo)/(res−1).
inline Batch square_grid(Eigen::Index dim, double lo, double hi, Eigen::Index res) {
    const double h = (hi - lo) / static_cast<double>(res - 1);
    if (dim == 1) {
        Batch pts(res, 1);
        for (Eigen::Index c = 0; c < res; ++c) pts(c, 0) = lo + h * static_cast<double>(c);
        return pts;
    }
    Batch pts(res * res, 2);
    for (Eigen::Index r = 0; r < res; ++r)
        for (Eigen::Index c = 0; c < res; ++c) {
            pts(r * res + c, 0) = lo + h * static_cast<double>(c);
            pts(r * res + c, 1) = lo + h * static_cast<double>(r);
        }
    return pts;
}

/// J(x_i; y) = f(x_i) − ⟨x_i, y⟩ over all grid rows, evaluated in chunks so
/// hidden-layer activations never balloon with the grid size.
inline Vector grid_j_values(const PotentialModel& f, const ParamVector& p, const Batch& pts,
                            const Vector& y) {
    const Eigen::Index n = pts.rows();
    Vector j(n);
    const Eigen::Index chunk = 16384;
    Vector fv;
    for (Eigen::Index start = 0; start < n; start += chunk) {
        const Eigen::Index len = std::min(chunk, n - start);
        Batch block = pts.middleRows(start, len);
        f.value(p, block, fv);
        j.segment(start, len) = fv - block * y;
    }
    return j;
}

inline void check_grid_args(const PotentialModel& f, const Vector& y, Eigen::Index resolution) {
    if (y.size() != f.dim()) throw DimensionError("grid oracle: query dimension mismatch");
    if (f.dim() != 1 && f.dim() != 2)
        throw ConfigError("grid oracle: only 1-D and 2-D potentials are supported");
    if (resolution < 101) throw ConfigError("grid oracle: resolution must be >= 101 per axis");
}

}  // namespace detail

struct GridMin {
    Vector x;
    double j = 0.0;
};

/// Exhaustive minimum of J(·; y) over the [lo,hi]^dim grid. Ties break to the
/// first row-major cell, so results are deterministic.
inline GridMin grid_conjugate_oracle(const PotentialModel& f, const ParamVector& p,
                                     const Vector& y, double lo, double hi,
                                     Eigen::Index resolution) {
    detail::check_grid_args(f, y, resolution);
    if (!(hi > lo)) throw ConfigError("grid oracle: need hi > lo");
    Batch pts = detail::square_grid(f.dim(), lo, hi, resolution);
    Vector j = detail::grid_j_values(f, p, pts, y);
    Eigen::Index best = 0;
    j.minCoeff(&best);
    GridMin out;
    out.x = pts.row(best).transpose();
    out.j = j(best);
    return out;
}

// ---------------------------------------------------------------------------
// Figure exports
// ---------------------------------------------------------------------------

struct PushforwardExport {
    Batch source;
    Batch mapped;
};

inline PushforwardExport pushforward_export(const MapFn& map, const Sampler& s, Eigen::Index n,
                                            std::uint64_t seed) {
    if (n < 1) throw ConfigError("pushforward_export: need n >= 1");
    PushforwardExport out;
    out.source = s.sample(n, seed);
    out.mapped = map(out.source);
    if (out.mapped.rows() != n || out.mapped.cols() != s.dim())
        throw DimensionError("pushforward_export: map changed the batch shape");
    return out;
}

struct InterpolationExport {
    std::vector<double> t_values;
    std::vector<Batch> frames;  // frames[k] = (1−t_k)·x + t_k·map(x)
};

/// Displacement-interpolation frames. The t=0 and t=1 frames are returned as
/// the source and push-forward batches themselves (no arithmetic), so endpoint
/// exports are bitwise identical to pushforward_export on the same seed.
inline InterpolationExport interpolation_export(const MapFn& map, const Sampler& s,
                                                Eigen::Index n, std::uint64_t seed,
                                                std::vector<double> t_values) {
    for (double t : t_values)
        if (!(t >= 0.0 && t <= 1.0))
            throw ConfigError("interpolation_export: t values must lie in [0, 1]");
    PushforwardExport ends = pushforward_export(map, s, n, seed);
    InterpolationExport out;
    out.t_values = std::move(t_values);
    out.frames.reserve(out.t_values.size());
    for (double t : out.t_values) {
        if (t == 0.0)
            out.frames.push_back(ends.source);
        else if (t == 1.0)
            out.frames.push_back(ends.mapped);
        else
            out.frames.push_back((1.0 - t) * ends.source + t * ends.mapped);
    }
    return out;
}

/// Conjugate solver settings for the 2-D synthetic tasks: change rule at
/// tol 1e-3 with a deep enough step grid to handle cold starts.
inline ConjugateConfig synthetic_solver_config() {
    ConjugateConfig cfg;
    cfg.method = ConjugateMethod::lbfgs;
    cfg.stop = StopRule::change;
    cfg.tol = 1e-3;
    cfg.max_iter = 100;
    cfg.linesearch.num_candidates = 30;
    return cfg;
}

struct LandscapeGrid {
    Vector y;
    double lo = 0.0, hi = 0.0;
    Eigen::Index resolution = 0;
    Eigen::MatrixXd j;  // j(r, c) = J((lo + c·h, lo + r·h); y)
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> mask;  // 1 ⟺ J > J(y;y)
    double j_at_y = 0.0;
    Vector x_star;  // conjugate argmin found by the solver, for the marker
    double j_at_x_star = 0.0;
};

/// J(·; y) heat-map over [lo,hi]² with the filtering rule: cells whose value
/// exceeds J(y; y) are masked out of the display.
inline LandscapeGrid landscape_export(const PotentialModel& f, const ParamVector& p,
                                      const Vector& y, double lo, double hi,
                                      Eigen::Index resolution,
                                      const ConjugateConfig& solver = synthetic_solver_config()) {
    detail::check_grid_args(f, y, resolution);
    if (f.dim() != 2) throw ConfigError("landscape_export: requires a 2-D potential");
    if (!(hi > lo)) throw ConfigError("landscape_export: need hi > lo");

    LandscapeGrid out;
    out.y = y;
    out.lo = lo;
    out.hi = hi;
    out.resolution = resolution;

    Batch pts = detail::square_grid(2, lo, hi, resolution);
    Vector j = detail::grid_j_values(f, p, pts, y);
    out.j = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                           Eigen::RowMajor>>(j.data(), resolution, resolution);

    Batch yb = y.transpose();
    Vector fy;
    f.value(p, yb, fy);
    out.j_at_y = fy(0) - y.squaredNorm();

    out.mask.resize(resolution, resolution);
    for (Eigen::Index r = 0; r < resolution; ++r)
        for (Eigen::Index c = 0; c < resolution; ++c)
            out.mask(r, c) = out.j(r, c) > out.j_at_y ? 1 : 0;

    ConjugateResult res = conjugate(f, p, yb, yb, solver);
    out.x_star = res.x_star.row(0).transpose();
    out.j_at_x_star = res.j_values(0);
    return out;
}

/// Point-set CSV rows: set_id, t, x1..xn (header written by the caller).
inline void append_points_csv(std::ostream& os, const std::string& set_id, double t,
                              const Batch& points) {
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        os << set_id << ',' << t;
        for (Eigen::Index c = 0; c < points.cols(); ++c) os << ',' << points(i, c);
        os << '\n';
    }
}

}  // namespace w2dual
