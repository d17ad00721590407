#pragma once

#include "w2dual/common.hpp"
#include "w2dual/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace w2dual {

/// Symmetric matrix power via eigendecomposition (dense, n is small).
inline Eigen::MatrixXd sym_pow(const Eigen::MatrixXd& s, double p) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
    if (es.info() != Eigen::Success) throw NumericalError("sym_pow: eigensolver failed");
    Eigen::VectorXd lam = es.eigenvalues();
    if (p < 0 || p != std::floor(p)) {
        if (lam.minCoeff() <= 0.0)
            throw ConfigError("sym_pow: matrix must be positive definite for power " +
                              std::to_string(p));
    }
    Eigen::VectorXd lp = lam.array().pow(p);
    return es.eigenvectors() * lp.asDiagonal() * es.eigenvectors().transpose();
}

inline void require_spd(const Eigen::MatrixXd& c, const std::string& what) {
    if (c.rows() != c.cols()) throw ConfigError(what + ": covariance must be square");
    if (!c.isApprox(c.transpose(), 1e-10)) throw ConfigError(what + ": covariance must be symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
    if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0.0)
        throw ConfigError(what + ": covariance must be positive definite");
}

/// Affine map x ↦ shift + M (x − center); rows of a batch are mapped independently.
struct AffineMap {
    Vector center;
    Eigen::MatrixXd M;
    Vector shift;

    Batch operator()(const Eigen::Ref<const Batch>& x) const {
        Batch out(x.rows(), M.rows());
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            out.row(i) = (shift + M * (x.row(i).transpose() - center)).transpose();
        return out;
    }
};

struct GaussianPair {
    Vector mean_a, mean_b;
    Eigen::MatrixXd cov_a, cov_b;
};

/// Closed-form W2-optimal map between Gaussians (Bures form):
/// T(x) = mean_b + M (x − mean_a), M = A^{-1/2} (A^{1/2} B A^{1/2})^{1/2} A^{-1/2}.
inline AffineMap gaussian_ground_truth_map(const GaussianPair& p) {
    require_spd(p.cov_a, "gaussian_ground_truth_map cov_a");
    require_spd(p.cov_b, "gaussian_ground_truth_map cov_b");
    Eigen::MatrixXd a_half = sym_pow(p.cov_a, 0.5);
    Eigen::MatrixXd a_mhalf = sym_pow(p.cov_a, -0.5);
    Eigen::MatrixXd mid = sym_pow(a_half * p.cov_b * a_half, 0.5);
    Eigen::MatrixXd m = a_mhalf * mid * a_mhalf;
    m = 0.5 * (m + m.transpose());
    return AffineMap{p.mean_a, m, p.mean_b};
}

/// Random SPD matrix with spectrum spanning [1, cond]: A = Q diag(λ) Qᵀ.
inline Eigen::MatrixXd random_spd(Eigen::Index dim, double cond, std::uint64_t seed) {
    if (dim < 1 || cond < 1.0) throw ConfigError("random_spd: need dim ≥ 1 and cond ≥ 1");
    Stream g(seed, /*stream=*/77);
    Eigen::MatrixXd raw = normal_batch(g, dim, dim);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
    Eigen::MatrixXd q = qr.householderQ();
    Eigen::VectorXd lam(dim);
    Stream g2(seed, /*stream=*/78);
    Cursor cur(g2, 0);
    for (Eigen::Index i = 0; i < dim; ++i) lam(i) = cur.uniform(1.0, cond);
    lam(0) = 1.0;
    if (dim > 1) lam(dim - 1) = cond;
    Eigen::MatrixXd a = q * lam.asDiagonal() * q.transpose();
    return 0.5 * (a + a.transpose());
}

enum class Family { point_mass, gaussian, gaussian_ring, checkerboard, moons, circles, s_curve };

/// Seeded sampler: sample(n, seed) is a pure function; identical (seed, n)
/// give bit-identical batches, and row i is the same for every n > i.
class Sampler {
public:
    static Sampler point_mass(Vector center) {
        Sampler s(Family::point_mass, center.size());
        s.mean_ = std::move(center);
        return s;
    }

    static Sampler standard_normal(Eigen::Index dim) {
        return gaussian(Vector::Zero(dim), Eigen::MatrixXd::Identity(dim, dim));
    }

    static Sampler gaussian(Vector mean, Eigen::MatrixXd cov) {
        require_spd(cov, "Sampler::gaussian");
        if (mean.size() != cov.rows()) throw ConfigError("Sampler::gaussian: mean/cov dim mismatch");
        Sampler s(Family::gaussian, mean.size());
        s.mean_ = std::move(mean);
        s.cov_ = cov;
        s.cov_sqrt_ = sym_pow(cov, 0.5);
        return s;
    }

    /// k Gaussians with std `sigma` evenly spaced on a circle of given radius.
    static Sampler gaussian_ring(int k, double radius, double sigma) {
        if (k < 1 || radius <= 0 || sigma <= 0) throw ConfigError("Sampler::gaussian_ring: bad params");
        Sampler s(Family::gaussian_ring, 2);
        for (int i = 0; i < k; ++i) {
            double th = 2.0 * M_PI * i / k;
            s.centers_.push_back((Vector(2) << radius * std::cos(th), radius * std::sin(th)).finished());
        }
        s.noise_ = sigma;
        return s;
    }

    /// Alternating active cells of a 4×4 grid on [−2,2]² (8 active cells).
    static Sampler checkerboard() {
        Sampler s(Family::checkerboard, 2);
        for (int ix = 0; ix < 4; ++ix)
            for (int iy = 0; iy < 4; ++iy)
                if ((ix + iy) % 2 == 0)
                    s.centers_.push_back((Vector(2) << -2.0 + ix, -2.0 + iy).finished());
        return s;
    }

    static Sampler moons(double noise) {
        Sampler s(Family::moons, 2);
        s.noise_ = noise;
        return s;
    }

    static Sampler circles(double r_inner, double r_outer, double noise) {
        Sampler s(Family::circles, 2);
        s.centers_.push_back((Vector(1) << r_inner).finished());
        s.centers_.push_back((Vector(1) << r_outer).finished());
        s.noise_ = noise;
        return s;
    }

    static Sampler s_curve() {
        Sampler s(Family::s_curve, 2);
        return s;
    }

    Family family() const { return family_; }
    Eigen::Index dim() const { return dim_; }

    /// Analytic mean, where available (all families here have one).
    Vector mean() const {
        switch (family_) {
            case Family::point_mass:
            case Family::gaussian: return mean_;
            case Family::gaussian_ring: {
                Vector m = Vector::Zero(2);
                for (const auto& c : centers_) m += c;
                return m / static_cast<double>(centers_.size());
            }
            case Family::checkerboard: {
                Vector m = Vector::Zero(2);
                for (const auto& c : centers_) m += c + Vector::Constant(2, 0.5);
                return m / static_cast<double>(centers_.size());
            }
            case Family::moons: {
                // Mean of the two-moon construction below (angles uniform on [0, π]):
                // outer (0, 2/π), inner (1, 0.5 − 2/π), mixed equally.
                Vector m(2);
                m << 0.5, 0.25;
                return m;
            }
            case Family::circles: return Vector::Zero(2);
            case Family::s_curve: return Vector::Zero(2);
        }
        throw ConfigError("Sampler::mean: unknown family");
    }

    Batch sample(Eigen::Index n_batch, std::uint64_t seed) const {
        if (n_batch < 1) throw ConfigError("Sampler::sample: n_batch must be ≥ 1");
        Stream g(seed, static_cast<std::uint64_t>(family_) + 1);
        Batch out(n_batch, dim_);
        const std::uint64_t stride = row_stride();
        for (Eigen::Index i = 0; i < n_batch; ++i) {
            Cursor cur(g, static_cast<std::uint64_t>(i) * stride);
            sample_row(cur, out.row(i));
        }
        if (!out.allFinite()) throw NumericalError("Sampler::sample: non-finite sample");
        return out;
    }

private:
    Sampler(Family f, Eigen::Index dim) : family_(f), dim_(dim) {}

    std::uint64_t row_stride() const {
        switch (family_) {
            case Family::point_mass: return 1;
            case Family::gaussian: return 2 * static_cast<std::uint64_t>(dim_);
            default: return 8;  // 2-D synthetics: branch + coordinate + noise draws
        }
    }

    void sample_row(Cursor& cur, Eigen::Ref<Eigen::RowVectorXd> row) const {
        switch (family_) {
            case Family::point_mass:
                row = mean_.transpose();
                return;
            case Family::gaussian: {
                Vector z(dim_);
                for (Eigen::Index j = 0; j < dim_; ++j) z(j) = cur.normal();
                row = (mean_ + cov_sqrt_ * z).transpose();
                return;
            }
            case Family::gaussian_ring: {
                const Vector& c = centers_[cur.below(centers_.size())];
                row(0) = c(0) + noise_ * cur.normal();
                row(1) = c(1) + noise_ * cur.normal();
                return;
            }
            case Family::checkerboard: {
                const Vector& c = centers_[cur.below(centers_.size())];
                row(0) = c(0) + cur.uniform();
                row(1) = c(1) + cur.uniform();
                return;
            }
            case Family::moons: {
                bool outer = cur.below(2) == 0;
                double t = cur.uniform(0.0, M_PI);
                if (outer) {
                    row(0) = std::cos(t);
                    row(1) = std::sin(t);
                } else {
                    row(0) = 1.0 - std::cos(t);
                    row(1) = 0.5 - std::sin(t);
                }
                row(0) += noise_ * cur.normal();
                row(1) += noise_ * cur.normal();
                return;
            }
            case Family::circles: {
                double r = centers_[cur.below(2)](0);
                double t = cur.uniform(0.0, 2.0 * M_PI);
                row(0) = r * std::cos(t) + noise_ * cur.normal();
                row(1) = r * std::sin(t) + noise_ * cur.normal();
                return;
            }
            case Family::s_curve: {
                double t = cur.uniform(-1.5 * M_PI, 1.5 * M_PI);
                row(0) = std::sin(t);
                row(1) = (t >= 0 ? 1.0 : -1.0) * (std::cos(t) - 1.0);
                return;
            }
        }
        throw ConfigError("Sampler::sample: unknown family");
    }

    Family family_;
    Eigen::Index dim_;
    Vector mean_;
    Eigen::MatrixXd cov_, cov_sqrt_;
    std::vector<Vector> centers_;
    double noise_ = 0.0;
};

struct TaskSpec {
    std::string name;
    Sampler alpha;
    Sampler beta;
    std::optional<GaussianPair> gaussian_pair;  // present iff closed-form ground truth exists
    std::optional<AffineMap> ground_truth;
};

inline TaskSpec make_gaussian_task(std::string name, GaussianPair p) {
    TaskSpec t{std::move(name), Sampler::gaussian(p.mean_a, p.cov_a),
               Sampler::gaussian(p.mean_b, p.cov_b), p, gaussian_ground_truth_map(p)};
    return t;
}

/// Named 2-D tasks addressable from the CLI.
inline std::vector<TaskSpec> synthetic_task_registry() {
    std::vector<TaskSpec> tasks;

    {
        GaussianPair p;
        p.mean_a = (Vector(2) << 0.5, -0.5).finished();
        p.mean_b = (Vector(2) << -1.0, 1.0).finished();
        p.cov_a = (Eigen::MatrixXd(2, 2) << 2.0, 0.5, 0.5, 1.0).finished();
        p.cov_b = (Eigen::MatrixXd(2, 2) << 1.0, -0.4, -0.4, 3.0).finished();
        tasks.push_back(make_gaussian_task("gauss_to_gauss_2d", p));
    }
    {
        GaussianPair p;
        p.mean_a = Vector::Zero(2);
        p.mean_b = Vector::Zero(2);
        p.cov_a = Eigen::MatrixXd::Identity(2, 2);
        p.cov_b = 4.0 * Eigen::MatrixXd::Identity(2, 2);
        tasks.push_back(make_gaussian_task("gauss_scale_2d", p));
    }

    Sampler src = Sampler::standard_normal(2);
    tasks.push_back(TaskSpec{"gauss_to_eight", src, Sampler::gaussian_ring(8, 4.0, 0.1), {}, {}});
    tasks.push_back(TaskSpec{"checkerboard", src, Sampler::checkerboard(), {}, {}});
    tasks.push_back(TaskSpec{"moons", src, Sampler::moons(0.05), {}, {}});
    tasks.push_back(TaskSpec{"circles", src, Sampler::circles(1.0, 2.0, 0.03), {}, {}});
    tasks.push_back(TaskSpec{"s_curve", src, Sampler::s_curve(), {}, {}});
    return tasks;
}

inline TaskSpec find_task(const std::string& name) {
    for (auto& t : synthetic_task_registry())
        if (t.name == name) return t;
    throw ConfigError("unknown task '" + name + "'");
}

}  // namespace w2dual
