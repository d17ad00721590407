#pragma once

#include "w2dual/adam.hpp"
#include "w2dual/layers.hpp"
#include "w2dual/measures.hpp"

#include <algorithm>
#include <memory>
#include <string>
#include <vector>

namespace w2dual {

// ---------------------------------------------------------------------------
// PotentialModel: scalar field f(x) with an augmented reverse-mode pass.
//
// backprop() differentiates  S = Σ_i wf_i·f(x_i) + Σ_i ws_i·⟨U_i, ∇f(x_i)⟩
// with respect to parameters (into gparams) and/or inputs (into gx), both
// accumulated with += (callers zero their accumulators). The second sum is
// realized as the tangent output of a forward-mode sweep along U, so its
// reverse pass yields Hessian-vector products (gx) and mixed second-order
// parameter gradients (gparams) in closed form.
// ---------------------------------------------------------------------------

class PotentialModel {
public:
    virtual ~PotentialModel() = default;
    virtual Eigen::Index dim() const = 0;
    virtual LayoutPtr layout() const = 0;
    virtual ParamVector init_params(std::uint64_t seed) const = 0;
    virtual void actnorm_init(ParamVector& /*p*/, const Eigen::Ref<const Batch>& /*x*/) const {}
    virtual void value(const ParamVector& p, const Eigen::Ref<const Batch>& x, Vector& f) const = 0;
    virtual void value_grad(const ParamVector& p, const Eigen::Ref<const Batch>& x, Vector& f,
                            Batch& gx) const = 0;
    virtual void backprop(const ParamVector& p, const Eigen::Ref<const Batch>& x, const Batch* U,
                          const Vector* wf, const Vector* ws, ParamVector* gparams,
                          Batch* gx) const = 0;
    virtual bool convex() const = 0;
    virtual std::string describe() const = 0;
};

inline Vector value_of(const PotentialModel& f, const ParamVector& p,
                       const Eigen::Ref<const Batch>& x) {
    Vector v;
    f.value(p, x, v);
    return v;
}

inline Batch grad_input(const PotentialModel& f, const ParamVector& p,
                        const Eigen::Ref<const Batch>& x) {
    Vector v;
    Batch g;
    f.value_grad(p, x, v, g);
    return g;
}

/// ∇_θ Σ_i w_i f(x_i)
inline ParamVector grad_params_weighted(const PotentialModel& f, const ParamVector& p,
                                        const Eigen::Ref<const Batch>& x, const Vector& w) {
    ParamVector g(f.layout());
    f.backprop(p, x, nullptr, &w, nullptr, &g, nullptr);
    return g;
}

/// Rows ∇²f(x_i)·v_i
inline Batch hvp_input(const PotentialModel& f, const ParamVector& p,
                       const Eigen::Ref<const Batch>& x, const Batch& V) {
    Vector ones = Vector::Ones(x.rows());
    Batch h = Batch::Zero(x.rows(), x.cols());
    f.backprop(p, x, &V, nullptr, &ones, nullptr, &h);
    return h;
}

/// ∇_θ Σ_i ⟨u_i, ∇_x f(x_i)⟩
inline ParamVector grad_params_dirgrad(const PotentialModel& f, const ParamVector& p,
                                       const Eigen::Ref<const Batch>& x, const Batch& U) {
    Vector ones = Vector::Ones(x.rows());
    ParamVector g(f.layout());
    f.backprop(p, x, &U, nullptr, &ones, &g, nullptr);
    return g;
}

// ---------------------------------------------------------------------------
// MLP potential: f(x) = act(D_K(act(D_{K-1}(...act(D_0(x))...)))) + e^a·½‖x‖²
// (activation applied to the final scalar layer too).
// ---------------------------------------------------------------------------

class MlpPotential : public PotentialModel {
public:
    MlpPotential(Eigen::Index dim, std::vector<Eigen::Index> hidden, ActFn act)
        : dim_(dim), hidden_(std::move(hidden)), act_(act),
          layout_(std::make_shared<ParamLayout>()) {
        if (dim_ < 1 || hidden_.empty()) throw ConfigError("MlpPotential: need dim ≥ 1 and hidden layers");
        Eigen::Index prev = dim_;
        for (std::size_t i = 0; i < hidden_.size(); ++i) {
            denses_.push_back(Dense::create(*layout_, "dense." + std::to_string(i), prev, hidden_[i]));
            prev = hidden_[i];
        }
        denses_.push_back(
            Dense::create(*layout_, "dense." + std::to_string(hidden_.size()), prev, 1));
        quad_ = QuadraticSkip::create(*layout_);
    }

    Eigen::Index dim() const override { return dim_; }
    LayoutPtr layout() const override { return layout_; }
    bool convex() const override { return false; }
    std::string describe() const override {
        std::string s = "mlp(hidden=[";
        for (std::size_t i = 0; i < hidden_.size(); ++i)
            s += (i ? "," : "") + std::to_string(hidden_[i]);
        return s + "], act=" + act_.name() + ")";
    }

    ParamVector init_params(std::uint64_t seed) const override {
        ParamVector p(layout_);
        Stream g(seed, 11);
        Cursor cur(g, 0);
        for (const auto& d : denses_) d.init(p, cur);
        return p;
    }

    void value(const ParamVector& p, const Eigen::Ref<const Batch>& x, Vector& f) const override {
        engine(p, x, nullptr, nullptr, nullptr, &f, nullptr, nullptr, nullptr);
    }
    void value_grad(const ParamVector& p, const Eigen::Ref<const Batch>& x, Vector& f,
                    Batch& gx) const override {
        Vector ones = Vector::Ones(x.rows());
        gx = Batch::Zero(x.rows(), dim_);
        engine(p, x, nullptr, &ones, nullptr, &f, nullptr, nullptr, &gx);
    }
    void backprop(const ParamVector& p, const Eigen::Ref<const Batch>& x, const Batch* U,
                  const Vector* wf, const Vector* ws, ParamVector* gparams,
                  Batch* gx) const override {
        engine(p, x, U, wf, ws, nullptr, nullptr, gparams, gx);
    }

private:
    Batch act_fwd(const Batch& a) const {
        return a.unaryExpr([this](double v) { return act_.f(v); });
    }
    Batch act_d1(const Batch& a) const {
        return a.unaryExpr([this](double v) { return act_.d1(v); });
    }
    Batch act_d2(const Batch& a) const {
        return a.unaryExpr([this](double v) { return act_.d2(v); });
    }

    void engine(const ParamVector& p, const Eigen::Ref<const Batch>& x, const Batch* U,
                const Vector* wf, const Vector* ws, Vector* f_out, Vector* s_out,
                ParamVector* gp, Batch* gx) const {
        if (x.cols() != dim_) throw DimensionError("MlpPotential: input dim mismatch");
        const Eigen::Index B = x.rows();
        const std::size_t K = denses_.size();
        const double ea = std::exp(p.scalar(quad_.a));
        const bool tangent = U != nullptr;

        std::vector<Batch> z(K + 1), a(K), tz, ta;
        z[0] = x;
        for (std::size_t i = 0; i < K; ++i) {
            denses_[i].fwd(p, z[i], a[i]);
            z[i + 1] = act_fwd(a[i]);
        }
        Vector hn = QuadraticSkip::half_sq_norms(x);
        if (f_out) *f_out = z[K].col(0) + ea * hn;

        Vector xdotU;
        if (tangent) {
            tz.resize(K + 1);
            ta.resize(K);
            tz[0] = *U;
            for (std::size_t i = 0; i < K; ++i) {
                denses_[i].tan(p, tz[i], ta[i]);
                tz[i + 1] = act_d1(a[i]).cwiseProduct(ta[i]);
            }
            xdotU = QuadraticSkip::row_dots(x, *U);
            if (s_out) *s_out = tz[K].col(0) + ea * xdotU;
        }
        if (!gp && !gx) return;

        Batch bz(B, 1), btz;
        for (Eigen::Index i = 0; i < B; ++i) bz(i, 0) = wf ? (*wf)(i) : 0.0;
        if (tangent) {
            btz.resize(B, 1);
            for (Eigen::Index i = 0; i < B; ++i) btz(i, 0) = ws ? (*ws)(i) : 0.0;
        }

        // quadratic head touches x directly
        if (gp) {
            double da = 0.0;
            for (Eigen::Index i = 0; i < B; ++i) {
                if (wf) da += (*wf)(i)*ea * hn(i);
                if (tangent && ws) da += (*ws)(i)*ea * xdotU(i);
            }
            gp->values()[gp->layout()->slot(quad_.a).offset] += da;
        }
        if (gx) {
            for (Eigen::Index i = 0; i < B; ++i) {
                if (wf) gx->row(i) += (*wf)(i)*ea * x.row(i);
                if (tangent && ws) gx->row(i) += (*ws)(i)*ea * U->row(i);
            }
        }

        for (std::size_t i = K; i-- > 0;) {
            Batch ba = act_d1(a[i]).cwiseProduct(bz);
            if (tangent) ba.array() += act_d2(a[i]).array() * ta[i].array() * btz.array();
            Batch bta;
            if (tangent) bta = act_d1(a[i]).cwiseProduct(btz);
            if (gp) {
                denses_[i].bwd_params(z[i], ba, *gp, /*with_bias=*/true);
                if (tangent) denses_[i].bwd_params(tz[i], bta, *gp, /*with_bias=*/false);
            }
            if (i > 0 || gx) {
                Batch bprev, btprev;
                denses_[i].bwd_input(p, ba, bprev, /*accumulate=*/false);
                if (tangent) denses_[i].bwd_input(p, bta, btprev, false);
                bz = std::move(bprev);
                btz = std::move(btprev);
            }
        }
        if (gx) *gx += bz;
    }

    Eigen::Index dim_;
    std::vector<Eigen::Index> hidden_;
    ActFn act_;
    std::shared_ptr<ParamLayout> layout_;
    std::vector<Dense> denses_;
    QuadraticSkip quad_;
};

// ---------------------------------------------------------------------------
// ICNN potential: convex in x for every parameter setting (softplus-positive
// z-path weights and actnorm scales, convex nondecreasing activation):
//   z₀ = act(Wx₀ x)
//   z_{i+1} = act(actnorm_i(Wz_i z_i + Wx_{i+1} x)),  i = 0..k−2
//   f = act(Wz_{k−1} z_{k−1} + Wx_k x) + e^a·½‖x‖²
// ---------------------------------------------------------------------------

class IcnnPotential : public PotentialModel {
public:
    IcnnPotential(Eigen::Index dim, std::vector<Eigen::Index> hidden, ActFn act,
                  bool use_actnorm = true)
        : dim_(dim), hidden_(std::move(hidden)), act_(act), use_actnorm_(use_actnorm),
          layout_(std::make_shared<ParamLayout>()) {
        if (dim_ < 1 || hidden_.empty()) throw ConfigError("IcnnPotential: need dim ≥ 1 and hidden layers");
        if (!act_.convex_nondecreasing())
            throw ConfigError("IcnnPotential: activation must be convex and nondecreasing");
        const std::size_t k = hidden_.size();
        for (std::size_t i = 1; i < k; ++i)
            wz_.push_back(PositiveDense::create(*layout_, "w_zs." + std::to_string(i - 1),
                                                hidden_[i - 1], hidden_[i]));
        wz_.push_back(
            PositiveDense::create(*layout_, "w_zs." + std::to_string(k - 1), hidden_[k - 1], 1));
        for (std::size_t i = 0; i < k; ++i)
            wx_.push_back(Dense::create(*layout_, "w_xs." + std::to_string(i), dim_, hidden_[i]));
        wx_.push_back(Dense::create(*layout_, "w_xs." + std::to_string(k), dim_, 1));
        if (use_actnorm_)
            for (std::size_t i = 0; i + 1 < k; ++i)
                an_.push_back(ActNorm::create(*layout_, "actnorm." + std::to_string(i), hidden_[i + 1]));
        quad_ = QuadraticSkip::create(*layout_);
    }

    Eigen::Index dim() const override { return dim_; }
    LayoutPtr layout() const override { return layout_; }
    bool convex() const override { return true; }
    std::string describe() const override {
        std::string s = "icnn(hidden=[";
        for (std::size_t i = 0; i < hidden_.size(); ++i)
            s += (i ? "," : "") + std::to_string(hidden_[i]);
        return s + "], act=" + act_.name() + (use_actnorm_ ? ", actnorm=on)" : ", actnorm=off)");
    }

    ParamVector init_params(std::uint64_t seed) const override {
        ParamVector p(layout_);
        Stream g(seed, 11);
        Cursor cur(g, 0);
        for (const auto& pd : wz_) pd.init(p, cur);
        for (const auto& d : wx_) d.init(p, cur);
        for (const auto& a : an_) a.init_identity(p);
        return p;
    }

    /// Data-dependent ActNorm init: each scale/shift standardizes the
    /// pre-actnorm activations of this batch, applied front to back.
    void actnorm_init(ParamVector& p, const Eigen::Ref<const Batch>& x) const override {
        if (an_.empty()) return;
        const std::size_t k = hidden_.size();
        Batch a0, z, c, n;
        wx_[0].fwd(p, x, a0);
        z = act_fwd(a0);
        for (std::size_t i = 0; i + 1 < k; ++i) {
            Kernel weff = wz_[i].effective(p);
            wz_[i].fwd(weff, z, c);
            wx_[i + 1].fwd(p, x, c, /*accumulate=*/true);
            an_[i].init_from_data(p, c);
            Vector s = an_[i].effective_scale(p);
            an_[i].fwd(s, p, c, n);
            z = act_fwd(n);
        }
    }

    void value(const ParamVector& p, const Eigen::Ref<const Batch>& x, Vector& f) const override {
        engine(p, x, nullptr, nullptr, nullptr, &f, nullptr, nullptr, nullptr);
    }
    void value_grad(const ParamVector& p, const Eigen::Ref<const Batch>& x, Vector& f,
                    Batch& gx) const override {
        Vector ones = Vector::Ones(x.rows());
        gx = Batch::Zero(x.rows(), dim_);
        engine(p, x, nullptr, &ones, nullptr, &f, nullptr, nullptr, &gx);
    }
    void backprop(const ParamVector& p, const Eigen::Ref<const Batch>& x, const Batch* U,
                  const Vector* wf, const Vector* ws, ParamVector* gparams,
                  Batch* gx) const override {
        engine(p, x, U, wf, ws, nullptr, nullptr, gparams, gx);
    }

private:
    Batch act_fwd(const Batch& a) const {
        return a.unaryExpr([this](double v) { return act_.f(v); });
    }
    Batch act_d1(const Batch& a) const {
        return a.unaryExpr([this](double v) { return act_.d1(v); });
    }
    Batch act_d2(const Batch& a) const {
        return a.unaryExpr([this](double v) { return act_.d2(v); });
    }

    void engine(const ParamVector& p, const Eigen::Ref<const Batch>& x, const Batch* U,
                const Vector* wf, const Vector* ws, Vector* f_out, Vector* s_out,
                ParamVector* gp, Batch* gx) const {
        if (x.cols() != dim_) throw DimensionError("IcnnPotential: input dim mismatch");
        const Eigen::Index B = x.rows();
        const std::size_t k = hidden_.size();
        const double ea = std::exp(p.scalar(quad_.a));
        const bool tangent = U != nullptr;

        // ---- forward ----
        std::vector<Kernel> weff(k);
        for (std::size_t i = 0; i < k; ++i) weff[i] = wz_[i].effective(p);
        std::vector<Vector> seff(an_.size());
        for (std::size_t i = 0; i < an_.size(); ++i) seff[i] = an_[i].effective_scale(p);

        Batch a0;
        wx_[0].fwd(p, x, a0);
        std::vector<Batch> z(k), c(k > 0 ? k - 1 : 0), n(k > 0 ? k - 1 : 0);
        z[0] = act_fwd(a0);
        for (std::size_t i = 0; i + 1 < k; ++i) {
            wz_[i].fwd(weff[i], z[i], c[i]);
            wx_[i + 1].fwd(p, x, c[i], /*accumulate=*/true);
            if (use_actnorm_) {
                an_[i].fwd(seff[i], p, c[i], n[i]);
            } else {
                n[i] = c[i];
            }
            z[i + 1] = act_fwd(n[i]);
        }
        Batch u;
        wz_[k - 1].fwd(weff[k - 1], z[k - 1], u);
        wx_[k].fwd(p, x, u, true);
        Batch v = act_fwd(u);
        Vector hn = QuadraticSkip::half_sq_norms(x);
        if (f_out) *f_out = v.col(0) + ea * hn;

        // ---- tangent forward ----
        Batch ta0, tu;
        std::vector<Batch> tz(k), tc(k > 0 ? k - 1 : 0), tn(k > 0 ? k - 1 : 0);
        Vector xdotU;
        if (tangent) {
            wx_[0].tan(p, *U, ta0);
            tz[0] = act_d1(a0).cwiseProduct(ta0);
            for (std::size_t i = 0; i + 1 < k; ++i) {
                wz_[i].tan(weff[i], tz[i], tc[i]);
                wx_[i + 1].tan(p, *U, tc[i], /*accumulate=*/true);
                if (use_actnorm_) {
                    an_[i].tan(seff[i], tc[i], tn[i]);
                } else {
                    tn[i] = tc[i];
                }
                tz[i + 1] = act_d1(n[i]).cwiseProduct(tn[i]);
            }
            wz_[k - 1].tan(weff[k - 1], tz[k - 1], tu);
            wx_[k].tan(p, *U, tu, true);
            xdotU = QuadraticSkip::row_dots(x, *U);
            if (s_out) *s_out = act_d1(u).cwiseProduct(tu).col(0) + ea * xdotU;
        }
        if (!gp && !gx) return;

        // ---- reverse ----
        Batch bv(B, 1), btv;
        for (Eigen::Index i = 0; i < B; ++i) bv(i, 0) = wf ? (*wf)(i) : 0.0;
        if (tangent) {
            btv.resize(B, 1);
            for (Eigen::Index i = 0; i < B; ++i) btv(i, 0) = ws ? (*ws)(i) : 0.0;
        }

        if (gp) {
            double da = 0.0;
            for (Eigen::Index i = 0; i < B; ++i) {
                if (wf) da += (*wf)(i)*ea * hn(i);
                if (tangent && ws) da += (*ws)(i)*ea * xdotU(i);
            }
            gp->values()[gp->layout()->slot(quad_.a).offset] += da;
        }
        if (gx) {
            for (Eigen::Index i = 0; i < B; ++i) {
                if (wf) gx->row(i) += (*wf)(i)*ea * x.row(i);
                if (tangent && ws) gx->row(i) += (*ws)(i)*ea * U->row(i);
            }
        }

        Batch bu = act_d1(u).cwiseProduct(bv);
        if (tangent) bu.array() += act_d2(u).array() * tu.array() * btv.array();
        Batch btu;
        if (tangent) btu = act_d1(u).cwiseProduct(btv);

        Batch bz, btz;
        if (gp) {
            wz_[k - 1].bwd_params(p, z[k - 1], bu, *gp);
            if (tangent) wz_[k - 1].bwd_params(p, tz[k - 1], btu, *gp);
            wx_[k].bwd_params(x, bu, *gp, true);
            if (tangent) wx_[k].bwd_params(*U, btu, *gp, false);
        }
        wz_[k - 1].bwd_input(weff[k - 1], bu, bz, /*accumulate=*/false);
        if (tangent) wz_[k - 1].bwd_input(weff[k - 1], btu, btz, false);
        if (gx) wx_[k].bwd_input(p, bu, *gx, true);

        for (std::size_t i = k - 1; i-- > 0;) {
            Batch bn = act_d1(n[i]).cwiseProduct(bz);
            if (tangent) bn.array() += act_d2(n[i]).array() * tn[i].array() * btz.array();
            Batch btn;
            if (tangent) btn = act_d1(n[i]).cwiseProduct(btz);

            Batch bc, btc;
            if (use_actnorm_) {
                if (gp) {
                    an_[i].bwd_params(p, c[i], bn, *gp, /*with_shift=*/true);
                    if (tangent) an_[i].bwd_params(p, tc[i], btn, *gp, false);
                }
                an_[i].bwd_input(seff[i], bn, bc, /*accumulate=*/false);
                if (tangent) an_[i].bwd_input(seff[i], btn, btc, false);
            } else {
                bc = std::move(bn);
                if (tangent) btc = std::move(btn);
            }

            if (gp) {
                wz_[i].bwd_params(p, z[i], bc, *gp);
                if (tangent) wz_[i].bwd_params(p, tz[i], btc, *gp);
                wx_[i + 1].bwd_params(x, bc, *gp, true);
                if (tangent) wx_[i + 1].bwd_params(*U, btc, *gp, false);
            }
            wz_[i].bwd_input(weff[i], bc, bz, false);
            if (tangent) wz_[i].bwd_input(weff[i], btc, btz, false);
            if (gx) wx_[i + 1].bwd_input(p, bc, *gx, true);
        }

        Batch ba0 = act_d1(a0).cwiseProduct(bz);
        if (tangent) ba0.array() += act_d2(a0).array() * ta0.array() * btz.array();
        if (gp) {
            wx_[0].bwd_params(x, ba0, *gp, true);
            if (tangent) {
                Batch bta0 = act_d1(a0).cwiseProduct(btz);
                wx_[0].bwd_params(*U, bta0, *gp, false);
            }
        }
        if (gx) wx_[0].bwd_input(p, ba0, *gx, true);
    }

    Eigen::Index dim_;
    std::vector<Eigen::Index> hidden_;
    ActFn act_;
    bool use_actnorm_;
    std::shared_ptr<ParamLayout> layout_;
    std::vector<PositiveDense> wz_;
    std::vector<Dense> wx_;
    std::vector<ActNorm> an_;
    QuadraticSkip quad_;
};

// ---------------------------------------------------------------------------
// Amortization models x̃(y): either a direct residual MLP (InitNN) or the
// input-gradient of a scalar potential.
// ---------------------------------------------------------------------------

class AmortModel {
public:
    virtual ~AmortModel() = default;
    virtual Eigen::Index dim() const = 0;
    virtual LayoutPtr layout() const = 0;
    virtual ParamVector init_params(std::uint64_t seed) const = 0;
    virtual void predict(const ParamVector& p, const Eigen::Ref<const Batch>& y,
                         Batch& out) const = 0;
    /// ∇ Σ_i ⟨v_i, x̃(y_i)⟩ into gparams / gy (accumulated with +=).
    virtual void vjp(const ParamVector& p, const Eigen::Ref<const Batch>& y, const Batch& V,
                     ParamVector* gparams, Batch* gy) const = 0;
    virtual std::string describe() const = 0;
};

inline Batch amort_predict(const AmortModel& m, const ParamVector& p,
                           const Eigen::Ref<const Batch>& y) {
    Batch out;
    m.predict(p, y, out);
    return out;
}

/// Residual MLP x̃(y) = y + D_out(act(D_{K-1}(...act(D_0(y))...))).
class InitNN : public AmortModel {
public:
    InitNN(Eigen::Index dim, std::vector<Eigen::Index> hidden, ActFn act)
        : dim_(dim), hidden_(std::move(hidden)), act_(act),
          layout_(std::make_shared<ParamLayout>()) {
        if (dim_ < 1 || hidden_.empty()) throw ConfigError("InitNN: need dim ≥ 1 and hidden layers");
        Eigen::Index prev = dim_;
        for (std::size_t i = 0; i < hidden_.size(); ++i) {
            denses_.push_back(Dense::create(*layout_, "dense." + std::to_string(i), prev, hidden_[i]));
            prev = hidden_[i];
        }
        out_ = Dense::create(*layout_, "out", prev, dim_);
    }

    Eigen::Index dim() const override { return dim_; }
    LayoutPtr layout() const override { return layout_; }
    std::string describe() const override {
        std::string s = "init_nn(hidden=[";
        for (std::size_t i = 0; i < hidden_.size(); ++i)
            s += (i ? "," : "") + std::to_string(hidden_[i]);
        return s + "], act=" + act_.name() + ")";
    }

    ParamVector init_params(std::uint64_t seed) const override {
        ParamVector p(layout_);
        Stream g(seed, 11);
        Cursor cur(g, 0);
        for (const auto& d : denses_) d.init(p, cur);
        out_.init(p, cur);
        return p;
    }

    void predict(const ParamVector& p, const Eigen::Ref<const Batch>& y, Batch& out) const override {
        if (y.cols() != dim_) throw DimensionError("InitNN: input dim mismatch");
        Batch z = y, a;
        for (const auto& d : denses_) {
            d.fwd(p, z, a);
            z = a.unaryExpr([this](double v) { return act_.f(v); });
        }
        out = y;
        out_.fwd(p, z, out, /*accumulate=*/true);
    }

    void vjp(const ParamVector& p, const Eigen::Ref<const Batch>& y, const Batch& V,
             ParamVector* gparams, Batch* gy) const override {
        if (y.cols() != dim_ || V.rows() != y.rows() || V.cols() != dim_)
            throw DimensionError("InitNN::vjp: shape mismatch");
        const std::size_t K = denses_.size();
        std::vector<Batch> z(K + 1), a(K);
        z[0] = y;
        for (std::size_t i = 0; i < K; ++i) {
            denses_[i].fwd(p, z[i], a[i]);
            z[i + 1] = a[i].unaryExpr([this](double v) { return act_.f(v); });
        }
        if (gparams) out_.bwd_params(z[K], V, *gparams, true);
        Batch bz;
        out_.bwd_input(p, V, bz, /*accumulate=*/false);
        for (std::size_t i = K; i-- > 0;) {
            Batch ba =
                a[i].unaryExpr([this](double v) { return act_.d1(v); }).cwiseProduct(bz);
            if (gparams) denses_[i].bwd_params(z[i], ba, *gparams, true);
            Batch bprev;
            denses_[i].bwd_input(p, ba, bprev, false);
            bz = std::move(bprev);
        }
        if (gy) *gy += bz + V;  // + V from the passthrough term
    }

private:
    Eigen::Index dim_;
    std::vector<Eigen::Index> hidden_;
    ActFn act_;
    std::shared_ptr<ParamLayout> layout_;
    std::vector<Dense> denses_;
    Dense out_;
};

/// x̃(y) = ∇_y g(y) for a scalar model g (ICNN or MLP potential).
class GradAmortizer : public AmortModel {
public:
    explicit GradAmortizer(std::shared_ptr<const PotentialModel> g) : g_(std::move(g)) {
        if (!g_) throw ConfigError("GradAmortizer: null potential");
    }

    Eigen::Index dim() const override { return g_->dim(); }
    LayoutPtr layout() const override { return g_->layout(); }
    std::string describe() const override { return "grad_of(" + g_->describe() + ")"; }
    ParamVector init_params(std::uint64_t seed) const override { return g_->init_params(seed); }
    const PotentialModel& inner() const { return *g_; }

    void predict(const ParamVector& p, const Eigen::Ref<const Batch>& y, Batch& out) const override {
        Vector f;
        g_->value_grad(p, y, f, out);
    }
    void vjp(const ParamVector& p, const Eigen::Ref<const Batch>& y, const Batch& V,
             ParamVector* gparams, Batch* gy) const override {
        Vector ones = Vector::Ones(y.rows());
        g_->backprop(p, y, &V, nullptr, &ones, gparams, gy);
    }

private:
    std::shared_ptr<const PotentialModel> g_;
};

// ---------------------------------------------------------------------------
// Identity pretraining: drive ∇f(x) ≈ x (potentials) or x̃(y) ≈ y (amortizers)
// on samples from the given measure.
// ---------------------------------------------------------------------------

struct PretrainConfig {
    std::int64_t n_iters = 2000;
    Eigen::Index batch = 1024;
    double lr = 1e-3;
    double beta1 = 0.9, beta2 = 0.999;
    std::uint64_t seed = 0;
    double target = 1e-2;  // held-out loss gate; above it → warning, not error
};

struct PretrainReport {
    double heldout_loss = 0.0;
    bool ok = false;
};

inline PretrainReport pretrain_potential(const PotentialModel& f, ParamVector& p,
                                         const Sampler& alpha, const PretrainConfig& cfg) {
    if (alpha.dim() != f.dim()) throw ConfigError("pretrain_potential: sampler dim mismatch");
    Adam opt(p.size());
    Stream batch_seeds(cfg.seed, 21);
    const double scale = 2.0 / static_cast<double>(cfg.batch);
    Vector fv;
    Batch gx;
    for (std::int64_t t = 0; t < cfg.n_iters; ++t) {
        Batch x = alpha.sample(cfg.batch, batch_seeds.bits(static_cast<std::uint64_t>(t)));
        f.value_grad(p, x, fv, gx);
        Batch u = scale * (gx - x);
        if (!u.allFinite())
            throw NumericalError("pretrain_potential: non-finite gradient at iteration " +
                                 std::to_string(t));
        ParamVector g(f.layout());
        Vector ones = Vector::Ones(cfg.batch);
        f.backprop(p, x, &u, nullptr, &ones, &g, nullptr);
        opt.step(p.values(), g.values(), cfg.lr, cfg.beta1, cfg.beta2);
        if (!p.values().allFinite())
            throw NumericalError("pretrain_potential: parameters diverged at iteration " +
                                 std::to_string(t));
    }
    Batch xh = alpha.sample(cfg.batch, batch_seeds.bits(static_cast<std::uint64_t>(cfg.n_iters)));
    f.value_grad(p, xh, fv, gx);
    Vector sq(xh.rows());
    for (Eigen::Index i = 0; i < xh.rows(); ++i) sq(i) = (gx.row(i) - xh.row(i)).squaredNorm();
    PretrainReport rep;
    rep.heldout_loss = kahan_mean(sq);
    rep.ok = rep.heldout_loss <= cfg.target;
    return rep;
}

inline PretrainReport pretrain_amortizer(const AmortModel& m, ParamVector& p,
                                         const Sampler& beta, const PretrainConfig& cfg) {
    if (beta.dim() != m.dim()) throw ConfigError("pretrain_amortizer: sampler dim mismatch");
    Adam opt(p.size());
    Stream batch_seeds(cfg.seed, 22);
    const double scale = 2.0 / static_cast<double>(cfg.batch);
    Batch pred;
    for (std::int64_t t = 0; t < cfg.n_iters; ++t) {
        Batch y = beta.sample(cfg.batch, batch_seeds.bits(static_cast<std::uint64_t>(t)));
        m.predict(p, y, pred);
        Batch v = scale * (pred - y);
        if (!v.allFinite())
            throw NumericalError("pretrain_amortizer: non-finite residual at iteration " +
                                 std::to_string(t));
        ParamVector g(m.layout());
        m.vjp(p, y, v, &g, nullptr);
        opt.step(p.values(), g.values(), cfg.lr, cfg.beta1, cfg.beta2);
        if (!p.values().allFinite())
            throw NumericalError("pretrain_amortizer: parameters diverged at iteration " +
                                 std::to_string(t));
    }
    Batch yh = beta.sample(cfg.batch, batch_seeds.bits(static_cast<std::uint64_t>(cfg.n_iters)));
    m.predict(p, yh, pred);
    Vector sq(yh.rows());
    for (Eigen::Index i = 0; i < yh.rows(); ++i) sq(i) = (pred.row(i) - yh.row(i)).squaredNorm();
    PretrainReport rep;
    rep.heldout_loss = kahan_mean(sq);
    rep.ok = rep.heldout_loss <= cfg.target;
    return rep;
}

// ---------------------------------------------------------------------------
// Exact quadratic benchmark potential.
// ---------------------------------------------------------------------------

/// f(x) = ½ xᵀA x for symmetric positive definite A: a parameter-free convex
/// potential with closed-form conjugate argmin A⁻¹y, used as the ground-truth
/// oracle in solver tests and as the synthetic line-search benchmark target.
class QuadraticPotential final : public PotentialModel {
public:
    explicit QuadraticPotential(Eigen::MatrixXd a)
        : a_(std::move(a)), layout_(std::make_shared<ParamLayout>()) {
        if (a_.rows() != a_.cols() || a_.rows() < 1)
            throw DimensionError("QuadraticPotential: matrix must be square");
    }

    Eigen::Index dim() const override { return a_.rows(); }
    LayoutPtr layout() const override { return layout_; }
    ParamVector init_params(std::uint64_t) const override { return ParamVector(layout_); }

    void value(const ParamVector&, const Eigen::Ref<const Batch>& x, Vector& f) const override {
        f.resize(x.rows());
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            Vector ax = a_ * x.row(i).transpose();
            f(i) = 0.5 * x.row(i).dot(ax);
        }
    }

    void value_grad(const ParamVector& p, const Eigen::Ref<const Batch>& x, Vector& f,
                    Batch& gx) const override {
        value(p, x, f);
        gx.resize(x.rows(), x.cols());
        for (Eigen::Index i = 0; i < x.rows(); ++i) gx.row(i) = a_ * x.row(i).transpose();
    }

    void backprop(const ParamVector&, const Eigen::Ref<const Batch>& x, const Batch* u,
                  const Vector* wf, const Vector* ws, ParamVector*, Batch* gx) const override {
        if (!gx) return;
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            if (wf) gx->row(i) += (*wf)(i) * (a_ * x.row(i).transpose()).transpose();
            if (ws && u) gx->row(i) += (*ws)(i) * (a_ * u->row(i).transpose()).transpose();
        }
    }

    bool convex() const override { return true; }
    std::string describe() const override { return "quadratic oracle"; }

    const Eigen::MatrixXd& matrix() const { return a_; }

private:
    Eigen::MatrixXd a_;
    LayoutPtr layout_;
};

// ---------------------------------------------------------------------------
// Factories (config surface).
// ---------------------------------------------------------------------------

inline std::vector<Eigen::Index> default_hidden_nd(Eigen::Index d) {
    return {std::max<Eigen::Index>(2 * d, 64), std::max<Eigen::Index>(2 * d, 64),
            std::max<Eigen::Index>(d, 32)};
}
inline std::vector<Eigen::Index> default_hidden_2d() { return {128, 128}; }

inline std::shared_ptr<PotentialModel> make_potential(const std::string& kind, Eigen::Index dim,
                                                      std::vector<Eigen::Index> hidden, ActFn act,
                                                      bool actnorm = true) {
    if (kind == "icnn") return std::make_shared<IcnnPotential>(dim, std::move(hidden), act, actnorm);
    if (kind == "mlp") return std::make_shared<MlpPotential>(dim, std::move(hidden), act);
    throw ConfigError("unknown potential kind '" + kind + "' (expected icnn|mlp)");
}

inline std::shared_ptr<AmortModel> make_amortizer(const std::string& kind, Eigen::Index dim,
                                                  std::vector<Eigen::Index> hidden, ActFn act,
                                                  bool actnorm = true) {
    if (kind == "init_nn") return std::make_shared<InitNN>(dim, std::move(hidden), act);
    if (kind == "grad_icnn")
        return std::make_shared<GradAmortizer>(
            std::make_shared<IcnnPotential>(dim, std::move(hidden), act, actnorm));
    if (kind == "grad_mlp")
        return std::make_shared<GradAmortizer>(
            std::make_shared<MlpPotential>(dim, std::move(hidden), act));
    throw ConfigError("unknown amortizer kind '" + kind + "' (expected init_nn|grad_icnn|grad_mlp)");
}

}  // namespace w2dual
