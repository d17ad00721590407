#pragma once

#include "w2dual/common.hpp"
#include "w2dual/param_vector.hpp"
#include "w2dual/rng.hpp"

#include <cmath>
#include <string>
#include <variant>
#include <vector>

namespace w2dual {

// ---------------------------------------------------------------------------
// Activations (value, first and second derivative — the second derivative is
// needed by the augmented reverse pass used for Hessian-vector products).
// ---------------------------------------------------------------------------

enum class Act { elu, leaky_relu, identity };

struct ActFn {
    Act kind = Act::elu;
    double slope = 0.2;  // leaky_relu only

    double f(double x) const {
        switch (kind) {
            case Act::elu: return x > 0 ? x : std::expm1(x);
            case Act::leaky_relu: return x > 0 ? x : slope * x;
            case Act::identity: return x;
        }
        return x;
    }
    double d1(double x) const {
        switch (kind) {
            case Act::elu: return x > 0 ? 1.0 : std::exp(x);
            case Act::leaky_relu: return x > 0 ? 1.0 : slope;
            case Act::identity: return 1.0;
        }
        return 1.0;
    }
    double d2(double x) const {
        return kind == Act::elu ? (x > 0 ? 0.0 : std::exp(x)) : 0.0;
    }

    /// Convex and nondecreasing — the properties the ICNN z-path requires.
    bool convex_nondecreasing() const {
        switch (kind) {
            case Act::elu: return true;
            case Act::leaky_relu: return slope >= 0.0;
            case Act::identity: return true;
        }
        return false;
    }

    static ActFn parse(const std::string& s) {
        if (s == "elu") return ActFn{Act::elu, 0.2};
        if (s == "leaky_relu") return ActFn{Act::leaky_relu, 0.2};
        if (s == "identity") return ActFn{Act::identity, 0.2};
        throw ConfigError("unknown activation '" + s + "'");
    }
    std::string name() const {
        switch (kind) {
            case Act::elu: return "elu";
            case Act::leaky_relu: return "leaky_relu";
            case Act::identity: return "identity";
        }
        return "?";
    }
};

inline double softplus(double x) {
    return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}
inline double inv_softplus(double y) {
    if (y <= 0) throw NumericalError("inv_softplus: argument must be positive");
    return y > 30 ? y : std::log(std::expm1(y));
}
inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// ---------------------------------------------------------------------------
// Row kernels. Every forward/tangent/input-gradient path loops rows
// independently with an arithmetic order that depends only on the layer
// shape, never on the batch — so a row's result is bit-identical whether it
// is evaluated alone or inside any batch. Parameter-gradient reductions are
// whole-batch GEMMs (deterministic for a fixed batch).
// ---------------------------------------------------------------------------

namespace rowk {

inline const double* row_ptr(const Eigen::Ref<const Batch>& m, Eigen::Index i) {
    return m.data() + i * m.outerStride();
}

/// out.row(i) = [bias +] x.row(i) · K, or += when accumulate. Axpy over rows
/// of K (contiguous in row-major), so there is no cross-lane reduction.
inline void matmul(const Eigen::Ref<const Batch>& x, const Eigen::Ref<const Kernel>& K,
                   const double* bias, Batch& out, bool accumulate) {
    const Eigen::Index B = x.rows(), n = K.rows(), m = K.cols();
    if (x.cols() != n) throw DimensionError("rowk::matmul: shape mismatch");
    if (!accumulate) out.resize(B, m);
    const double* kd = K.data();
    for (Eigen::Index i = 0; i < B; ++i) {
        const double* xr = row_ptr(x, i);
        double* o = out.data() + i * m;
        if (!accumulate) {
            if (bias)
                for (Eigen::Index j = 0; j < m; ++j) o[j] = bias[j];
            else
                for (Eigen::Index j = 0; j < m; ++j) o[j] = 0.0;
        } else if (bias) {
            for (Eigen::Index j = 0; j < m; ++j) o[j] += bias[j];
        }
        for (Eigen::Index k = 0; k < n; ++k) {
            const double a = xr[k];
            const double* kr = kd + k * m;
            for (Eigen::Index j = 0; j < m; ++j) o[j] += a * kr[j];
        }
    }
}

/// out.row(i) [+]= g.row(i) · Kᵀ, i.e. out(i,k) = ⟨g.row(i), K.row(k)⟩.
/// The dot reduction order depends only on K's column count.
inline void matmul_bt(const Eigen::Ref<const Batch>& g, const Eigen::Ref<const Kernel>& K,
                      Batch& out, bool accumulate) {
    const Eigen::Index B = g.rows(), n = K.rows(), m = K.cols();
    if (g.cols() != m) throw DimensionError("rowk::matmul_bt: shape mismatch");
    if (!accumulate) out.resize(B, n);
    const double* kd = K.data();
    for (Eigen::Index i = 0; i < B; ++i) {
        const double* gr = row_ptr(g, i);
        double* o = out.data() + i * n;
        for (Eigen::Index k = 0; k < n; ++k) {
            double acc = Eigen::Map<const Vector>(gr, m).dot(Eigen::Map<const Vector>(kd + k * m, m));
            if (accumulate)
                o[k] += acc;
            else
                o[k] = acc;
        }
    }
}

}  // namespace rowk

inline double truncated_normal(Cursor& cur) {
    for (int tries = 0; tries < 64; ++tries) {
        double z = cur.normal();
        if (std::abs(z) <= 2.0) return z;
    }
    return 0.0;
}

/// fan-in variance scaling with ±2σ truncation (the 0.8796 factor restores
/// unit variance after truncation).
inline void lecun_truncated_init(Eigen::Map<Kernel> k, Cursor& cur) {
    const double stddev = std::sqrt(1.0 / static_cast<double>(k.rows())) / 0.8796256610342398;
    for (Eigen::Index r = 0; r < k.rows(); ++r)
        for (Eigen::Index c = 0; c < k.cols(); ++c) k(r, c) = stddev * truncated_normal(cur);
}

// ---------------------------------------------------------------------------
// Layers. Each struct owns its slots in a shared layout and implements
// closed-form forward / tangent / backward rules. Backward methods accumulate
// (+=) into their outputs.
// ---------------------------------------------------------------------------

struct Dense {
    Eigen::Index in = 0, out = 0;
    Eigen::Index w = -1, b = -1;

    static Dense create(ParamLayout& L, const std::string& prefix, Eigen::Index in,
                        Eigen::Index out, bool bias = true) {
        Dense d;
        d.in = in;
        d.out = out;
        d.w = L.add(prefix + ".kernel", in, out);
        if (bias) d.b = L.add(prefix + ".bias", out, 1);
        return d;
    }

    void init(ParamVector& p, Cursor& cur) const { lecun_truncated_init(p.matrix(w), cur); }

    void fwd(const ParamVector& p, const Eigen::Ref<const Batch>& x, Batch& y,
             bool accumulate = false) const {
        rowk::matmul(x, p.matrix(w), b >= 0 ? p.vector(b).data() : nullptr, y, accumulate);
    }
    /// Tangent map: ty [+]= tx · W (bias has zero tangent).
    void tan(const ParamVector& p, const Eigen::Ref<const Batch>& tx, Batch& ty,
             bool accumulate = false) const {
        rowk::matmul(tx, p.matrix(w), nullptr, ty, accumulate);
    }
    void bwd_input(const ParamVector& p, const Eigen::Ref<const Batch>& by, Batch& bx,
                   bool accumulate = true) const {
        rowk::matmul_bt(by, p.matrix(w), bx, accumulate);
    }
    /// dW += xᵀ·by and (primal passes only) db += Σ_rows by.
    void bwd_params(const Eigen::Ref<const Batch>& x, const Eigen::Ref<const Batch>& by,
                    ParamVector& g, bool with_bias = true) const {
        g.matrix(w).noalias() += x.transpose() * by;
        if (b >= 0 && with_bias) g.vector(b) += by.colwise().sum().transpose();
    }
};

struct PositiveDense {
    Eigen::Index in = 0, out = 0;
    Eigen::Index w = -1;  // unconstrained kernel; effective weights are softplus(w)

    static PositiveDense create(ParamLayout& L, const std::string& prefix, Eigen::Index in,
                                Eigen::Index out) {
        PositiveDense d;
        d.in = in;
        d.out = out;
        d.w = L.add(prefix + ".kernel_raw", in, out);
        return d;
    }

    /// Raw weights chosen so the *effective* weights follow the usual fan-in
    /// scale (folded truncated normal pushed through softplus⁻¹).
    void init(ParamVector& p, Cursor& cur) const {
        auto k = p.matrix(w);
        const double stddev = std::sqrt(1.0 / static_cast<double>(k.rows())) / 0.8796256610342398;
        for (Eigen::Index r = 0; r < k.rows(); ++r)
            for (Eigen::Index c = 0; c < k.cols(); ++c) {
                double eff = std::abs(stddev * truncated_normal(cur)) + 1e-4;
                k(r, c) = inv_softplus(eff);
            }
    }

    Kernel effective(const ParamVector& p) const {
        return p.matrix(w).unaryExpr([](double v) { return softplus(v); });
    }

    void fwd(const Kernel& weff, const Eigen::Ref<const Batch>& x, Batch& y,
             bool accumulate = false) const {
        rowk::matmul(x, weff, nullptr, y, accumulate);
    }
    void tan(const Kernel& weff, const Eigen::Ref<const Batch>& tx, Batch& ty,
             bool accumulate = false) const {
        rowk::matmul(tx, weff, nullptr, ty, accumulate);
    }
    void bwd_input(const Kernel& weff, const Eigen::Ref<const Batch>& by, Batch& bx,
                   bool accumulate = true) const {
        rowk::matmul_bt(by, weff, bx, accumulate);
    }
    /// dW_raw += (xᵀ·by) ⊙ σ(W_raw)   (chain rule through softplus).
    void bwd_params(const ParamVector& p, const Eigen::Ref<const Batch>& x,
                    const Eigen::Ref<const Batch>& by, ParamVector& g) const {
        Kernel acc = x.transpose() * by;
        auto raw = p.matrix(w);
        g.matrix(w).array() +=
            acc.array() * raw.unaryExpr([](double v) { return logistic(v); }).array();
    }
};

/// Per-channel affine y = s ⊙ x + shift with s = softplus(s_raw) > 0, so that
/// placing it on the ICNN z-path cannot break convexity for any parameters.
struct ActNorm {
    Eigen::Index ch = 0;
    Eigen::Index s = -1, b = -1;

    static ActNorm create(ParamLayout& L, const std::string& prefix, Eigen::Index ch) {
        ActNorm a;
        a.ch = ch;
        a.s = L.add(prefix + ".scale_raw", ch, 1);
        a.b = L.add(prefix + ".shift", ch, 1);
        return a;
    }

    void init_identity(ParamVector& p) const {
        p.vector(s).setConstant(inv_softplus(1.0));
        p.vector(b).setZero();
    }

    /// Data-dependent init: output on z has per-channel zero mean, unit
    /// variance (up to the 1e−6 guard for constant channels).
    void init_from_data(ParamVector& p, const Eigen::Ref<const Batch>& z) const {
        if (z.cols() != ch) throw DimensionError("ActNorm::init_from_data: channel mismatch");
        auto sr = p.vector(s);
        auto sh = p.vector(b);
        const double nb = static_cast<double>(z.rows());
        for (Eigen::Index j = 0; j < ch; ++j) {
            double mean = z.col(j).sum() / nb;
            double var = (z.col(j).array() - mean).square().sum() / nb;
            double scale = 1.0 / std::sqrt(var + 1e-6);
            sr(j) = inv_softplus(scale);
            sh(j) = -mean * scale;
        }
    }

    Vector effective_scale(const ParamVector& p) const {
        return p.vector(s).unaryExpr([](double v) { return softplus(v); });
    }

    void fwd(const Vector& seff, const ParamVector& p, const Eigen::Ref<const Batch>& x,
             Batch& y) const {
        auto sh = p.vector(b);
        y.resize(x.rows(), ch);
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const double* xr = rowk::row_ptr(x, i);
            double* o = y.data() + i * ch;
            for (Eigen::Index j = 0; j < ch; ++j) o[j] = seff(j) * xr[j] + sh(j);
        }
    }
    void tan(const Vector& seff, const Eigen::Ref<const Batch>& tx, Batch& ty) const {
        ty.resize(tx.rows(), ch);
        for (Eigen::Index i = 0; i < tx.rows(); ++i) {
            const double* xr = rowk::row_ptr(tx, i);
            double* o = ty.data() + i * ch;
            for (Eigen::Index j = 0; j < ch; ++j) o[j] = seff(j) * xr[j];
        }
    }
    void bwd_input(const Vector& seff, const Eigen::Ref<const Batch>& by, Batch& bx,
                   bool accumulate = true) const {
        if (!accumulate) {
            bx.resize(by.rows(), ch);
            bx.setZero();
        }
        for (Eigen::Index i = 0; i < by.rows(); ++i) {
            const double* gr = rowk::row_ptr(by, i);
            double* o = bx.data() + i * ch;
            for (Eigen::Index j = 0; j < ch; ++j) o[j] += seff(j) * gr[j];
        }
    }
    /// ds_raw += (Σ_rows x ⊙ by) ⊙ σ(s_raw); primal passes also dshift += Σ by.
    void bwd_params(const ParamVector& p, const Eigen::Ref<const Batch>& x,
                    const Eigen::Ref<const Batch>& by, ParamVector& g,
                    bool with_shift = true) const {
        Vector dxby = (x.array() * by.array()).colwise().sum().matrix().transpose();
        auto sr = p.vector(s);
        auto gs = g.vector(s);
        for (Eigen::Index j = 0; j < ch; ++j) gs(j) += dxby(j) * logistic(sr(j));
        if (with_shift) g.vector(b) += by.colwise().sum().transpose();
    }
};

struct Activation {
    ActFn fn;
    Eigen::Index dim = 0;

    void fwd(const Eigen::Ref<const Batch>& x, Batch& y) const {
        y = x.unaryExpr([this](double v) { return fn.f(v); });
    }
    void tan(const Eigen::Ref<const Batch>& x, const Eigen::Ref<const Batch>& tx,
             Batch& ty) const {
        ty = x.binaryExpr(tx, [this](double xv, double tv) { return fn.d1(xv) * tv; });
    }
    void bwd_input(const Eigen::Ref<const Batch>& x, const Eigen::Ref<const Batch>& by,
                   Batch& bx, bool accumulate = true) const {
        if (!accumulate) {
            bx.resize(x.rows(), x.cols());
            bx.setZero();
        }
        bx.array() += x.unaryExpr([this](double v) { return fn.d1(v); }).array() * by.array();
    }
    /// Second-order term of the augmented pass: bx += φ''(x) ⊙ tx ⊙ bty.
    void bwd_input_tangent(const Eigen::Ref<const Batch>& x, const Eigen::Ref<const Batch>& tx,
                           const Eigen::Ref<const Batch>& bty, Batch& bx) const {
        bx.array() += x.unaryExpr([this](double v) { return fn.d2(v); }).array() * tx.array() *
                      bty.array();
    }
};

/// Scalar head: f = z + exp(log_alpha)·½‖x₀‖² where x₀ is the model input.
struct QuadraticSkip {
    Eigen::Index a = -1;

    static QuadraticSkip create(ParamLayout& L) {
        QuadraticSkip q;
        q.a = L.add("log_alpha", 1, 1);
        return q;
    }

    static Vector half_sq_norms(const Eigen::Ref<const Batch>& x) {
        Vector out(x.rows());
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const double* xr = rowk::row_ptr(x, i);
            double acc = 0.0;
            for (Eigen::Index j = 0; j < x.cols(); ++j) acc += xr[j] * xr[j];
            out(i) = 0.5 * acc;
        }
        return out;
    }

    static Vector row_dots(const Eigen::Ref<const Batch>& x, const Eigen::Ref<const Batch>& u) {
        Vector out(x.rows());
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const double* xr = rowk::row_ptr(x, i);
            const double* ur = rowk::row_ptr(u, i);
            double acc = 0.0;
            for (Eigen::Index j = 0; j < x.cols(); ++j) acc += xr[j] * ur[j];
            out(i) = acc;
        }
        return out;
    }
};

// ---------------------------------------------------------------------------
// LayerStack: a plain sequential composition of the primitives above with
// first-order reverse-mode. The named architectures wire skips by hand; this
// generic chain is the unit of the layer-level contracts and their tests.
// ---------------------------------------------------------------------------

class LayerStack {
public:
    using Layer = std::variant<Dense, PositiveDense, ActNorm, Activation, QuadraticSkip>;

    explicit LayerStack(Eigen::Index input_dim)
        : input_dim_(input_dim), cur_dim_(input_dim), layout_(std::make_shared<ParamLayout>()) {}

    LayerStack& dense(Eigen::Index out, bool bias = true) {
        require_open();
        layers_.push_back(Dense::create(*layout_, tag("dense"), cur_dim_, out, bias));
        cur_dim_ = out;
        return *this;
    }
    LayerStack& positive_dense(Eigen::Index out) {
        require_open();
        layers_.push_back(PositiveDense::create(*layout_, tag("positive_dense"), cur_dim_, out));
        cur_dim_ = out;
        return *this;
    }
    LayerStack& actnorm() {
        require_open();
        layers_.push_back(ActNorm::create(*layout_, tag("actnorm"), cur_dim_));
        return *this;
    }
    LayerStack& activation(ActFn fn) {
        require_open();
        layers_.push_back(Activation{fn, cur_dim_});
        return *this;
    }
    LayerStack& quadratic_skip() {
        require_open();
        if (cur_dim_ != 1) throw DimensionError("quadratic_skip needs a scalar head");
        layers_.push_back(QuadraticSkip::create(*layout_));
        return *this;
    }

    void finalize() { finalized_ = true; }

    Eigen::Index input_dim() const { return input_dim_; }
    Eigen::Index output_dim() const { return cur_dim_; }
    LayoutPtr layout() const { return layout_; }

    ParamVector init_params(std::uint64_t seed) const {
        ParamVector p(layout_);
        Stream g(seed, /*stream=*/11);
        Cursor cur(g, 0);
        for (const auto& l : layers_) {
            if (auto* d = std::get_if<Dense>(&l)) d->init(p, cur);
            if (auto* pd = std::get_if<PositiveDense>(&l)) pd->init(p, cur);
            if (auto* an = std::get_if<ActNorm>(&l)) an->init_identity(p);
        }
        return p;
    }

    Batch forward(const ParamVector& p, const Eigen::Ref<const Batch>& x) const {
        Trace tr;
        return run_forward(p, x, tr);
    }

    /// ∂(scalar output)/∂x per row; requires output_dim == 1.
    Batch grad_input(const ParamVector& p, const Eigen::Ref<const Batch>& x) const {
        require_scalar();
        Trace tr;
        run_forward(p, x, tr);
        Vector bf = Vector::Ones(x.rows());
        Batch bx = Batch::Zero(x.rows(), input_dim_);
        run_backward(p, x, tr, bf, nullptr, &bx);
        return bx;
    }

    /// ∇_params Σ_i w_i·f(x_i); requires output_dim == 1.
    ParamVector grad_params_weighted(const ParamVector& p, const Eigen::Ref<const Batch>& x,
                                     const Vector& w) const {
        require_scalar();
        Trace tr;
        run_forward(p, x, tr);
        ParamVector g(layout_);
        run_backward(p, x, tr, w, &g, nullptr);
        return g;
    }

    /// Data-dependent ActNorm initialization on batch x (pre-activation stats).
    void actnorm_init(ParamVector& p, const Eigen::Ref<const Batch>& x) const {
        Batch z = x;
        for (const auto& l : layers_) {
            if (auto* an = std::get_if<ActNorm>(&l)) an->init_from_data(p, z);
            z = apply_one(l, p, z, x);
        }
    }

private:
    struct Trace {
        std::vector<Batch> acts;        // acts[l] = input to layer l
        std::vector<Kernel> weff;       // per layer (PositiveDense only)
        std::vector<Vector> seff;       // per layer (ActNorm only)
        std::vector<Vector> half_norms; // per layer (QuadraticSkip only)
    };

    void require_open() const {
        if (finalized_) throw DimensionError("LayerStack: already finalized");
    }
    void require_scalar() const {
        if (cur_dim_ != 1) throw DimensionError("LayerStack: scalar output required");
    }
    std::string tag(const std::string& kind) {
        return kind + "." + std::to_string(layers_.size());
    }

    Batch apply_one(const Layer& l, const ParamVector& p, const Eigen::Ref<const Batch>& z,
                    const Eigen::Ref<const Batch>& x0) const {
        Batch out;
        if (auto* d = std::get_if<Dense>(&l)) {
            d->fwd(p, z, out);
        } else if (auto* pd = std::get_if<PositiveDense>(&l)) {
            Kernel w = pd->effective(p);
            pd->fwd(w, z, out);
        } else if (auto* an = std::get_if<ActNorm>(&l)) {
            Vector s = an->effective_scale(p);
            an->fwd(s, p, z, out);
        } else if (auto* ac = std::get_if<Activation>(&l)) {
            ac->fwd(z, out);
        } else if (auto* q = std::get_if<QuadraticSkip>(&l)) {
            Vector hn = QuadraticSkip::half_sq_norms(x0);
            out = z;
            double ea = std::exp(p.scalar(q->a));
            for (Eigen::Index i = 0; i < out.rows(); ++i) out(i, 0) += ea * hn(i);
        }
        return out;
    }

    Batch run_forward(const ParamVector& p, const Eigen::Ref<const Batch>& x, Trace& tr) const {
        if (x.cols() != input_dim_) throw DimensionError("LayerStack::forward: input dim mismatch");
        if (!x.allFinite()) throw NumericalError("LayerStack::forward: non-finite input");
        tr.acts.clear();
        tr.weff.assign(layers_.size(), Kernel());
        tr.seff.assign(layers_.size(), Vector());
        tr.half_norms.assign(layers_.size(), Vector());
        Batch z = x;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            tr.acts.push_back(z);
            const auto& lay = layers_[l];
            Batch out;
            if (auto* d = std::get_if<Dense>(&lay)) {
                d->fwd(p, z, out);
            } else if (auto* pd = std::get_if<PositiveDense>(&lay)) {
                tr.weff[l] = pd->effective(p);
                pd->fwd(tr.weff[l], z, out);
            } else if (auto* an = std::get_if<ActNorm>(&lay)) {
                tr.seff[l] = an->effective_scale(p);
                an->fwd(tr.seff[l], p, z, out);
            } else if (auto* ac = std::get_if<Activation>(&lay)) {
                ac->fwd(z, out);
            } else if (auto* q = std::get_if<QuadraticSkip>(&lay)) {
                tr.half_norms[l] = QuadraticSkip::half_sq_norms(x);
                out = z;
                double ea = std::exp(p.scalar(q->a));
                for (Eigen::Index i = 0; i < out.rows(); ++i) out(i, 0) += ea * tr.half_norms[l](i);
            }
            z = std::move(out);
        }
        return z;
    }

    /// First-order reverse sweep. bf seeds the scalar output cotangent per
    /// row; accumulates into gparams and/or bx when non-null.
    void run_backward(const ParamVector& p, const Eigen::Ref<const Batch>& x, const Trace& tr,
                      const Vector& bf, ParamVector* gparams, Batch* bx) const {
        Batch bz(x.rows(), 1);
        for (Eigen::Index i = 0; i < x.rows(); ++i) bz(i, 0) = bf(i);
        Batch bx0 = Batch::Zero(x.rows(), input_dim_);  // skip-path input cotangent
        for (std::size_t li = layers_.size(); li-- > 0;) {
            const auto& lay = layers_[li];
            const Batch& zin = tr.acts[li];
            Batch bprev;
            if (auto* d = std::get_if<Dense>(&lay)) {
                if (gparams) d->bwd_params(zin, bz, *gparams);
                d->bwd_input(p, bz, bprev, /*accumulate=*/false);
            } else if (auto* pd = std::get_if<PositiveDense>(&lay)) {
                if (gparams) pd->bwd_params(p, zin, bz, *gparams);
                pd->bwd_input(tr.weff[li], bz, bprev, false);
            } else if (auto* an = std::get_if<ActNorm>(&lay)) {
                if (gparams) an->bwd_params(p, zin, bz, *gparams);
                an->bwd_input(tr.seff[li], bz, bprev, false);
            } else if (auto* ac = std::get_if<Activation>(&lay)) {
                ac->bwd_input(zin, bz, bprev, false);
            } else if (auto* q = std::get_if<QuadraticSkip>(&lay)) {
                double ea = std::exp(p.scalar(q->a));
                if (gparams) {
                    double da = 0.0;
                    for (Eigen::Index i = 0; i < x.rows(); ++i)
                        da += bz(i, 0) * ea * tr.half_norms[li](i);
                    gparams->values()[gparams->layout()->slot(q->a).offset] += da;
                }
                for (Eigen::Index i = 0; i < x.rows(); ++i)
                    bx0.row(i) += bz(i, 0) * ea * x.row(i);
                bprev = bz;
            }
            bz = std::move(bprev);
        }
        if (bx) *bx += bz + bx0;
    }

    Eigen::Index input_dim_, cur_dim_;
    std::shared_ptr<ParamLayout> layout_;
    std::vector<Layer> layers_;
    bool finalized_ = false;
};

}  // namespace w2dual
