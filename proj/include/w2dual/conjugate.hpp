#pragma once

// Batched solvers for the pointwise conjugation problem
//     x_star(y) = argmin_x J(x; y),   J(x; y) = f(x) - <x, y>,
// used to fine-tune amortized predictions of the conjugate argmin. One
// independent problem per batch row; rows freeze individually when they
// converge, fail, or exhaust the line search, and a frozen row's trajectory
// is bit-identical to solving that row in isolation.

#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "w2dual/adam.hpp"
#include "w2dual/common.hpp"
#include "w2dual/potentials.hpp"

namespace w2dual {

// ---------------------------------------------------------------------------
// Objective
// ---------------------------------------------------------------------------

/// J(x; y) = f(x) - <x, y> with per-row pairing of iterates and targets.
/// Holds references only; the potential, parameters, and target batch must
/// outlive the objective.
class ConjugateObjective {
  public:
    ConjugateObjective(const PotentialModel& f, const ParamVector& params, const Batch& targets)
        : f_(&f), params_(&params), y_(&targets) {
        if (targets.cols() != f.dim())
            throw DimensionError("ConjugateObjective: target dim does not match potential dim");
    }

    Eigen::Index rows() const { return y_->rows(); }
    Eigen::Index dim() const { return y_->cols(); }
    const Batch& targets() const { return *y_; }

    /// J for each row of x, row i paired with target row rows[i].
    Vector value(const Eigen::Ref<const Batch>& x, const std::vector<Eigen::Index>& rows) const {
        Vector j = value_of(*f_, *params_, x);
        subtract_dots(x, rows, j);
        return j;
    }

    /// J and gradient dJ/dx = grad f(x) - y, row-paired as in value().
    Vector value_grad(const Eigen::Ref<const Batch>& x, const std::vector<Eigen::Index>& rows,
                      Batch& g) const {
        Vector j;
        f_->value_grad(*params_, x, j, g);
        for (Eigen::Index i = 0; i < x.rows(); ++i) g.row(i) -= y_->row(rows[i]);
        subtract_dots(x, rows, j);
        return j;
    }

    Vector value(const Eigen::Ref<const Batch>& x) const { return value(x, identity_rows()); }

    Vector value_grad(const Eigen::Ref<const Batch>& x, Batch& g) const {
        return value_grad(x, identity_rows(), g);
    }

  private:
    std::vector<Eigen::Index> identity_rows() const {
        std::vector<Eigen::Index> rows(static_cast<std::size_t>(y_->rows()));
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<Eigen::Index>(i);
        return rows;
    }

    void subtract_dots(const Eigen::Ref<const Batch>& x, const std::vector<Eigen::Index>& rows,
                       Vector& j) const {
        if (x.rows() != static_cast<Eigen::Index>(rows.size()))
            throw DimensionError("ConjugateObjective: row map size mismatch");
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            j(i) -= x.row(i).dot(y_->row(rows[static_cast<std::size_t>(i)]));
    }

    const PotentialModel* f_;
    const ParamVector* params_;
    const Batch* y_;
};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class LineSearchMethod {
    backtracking_armijo,
    parallel_armijo,
    backtracking_wolfe,
    backtracking_strong_wolfe,
};

inline LineSearchMethod parse_linesearch(const std::string& name) {
    if (name == "backtracking_armijo") return LineSearchMethod::backtracking_armijo;
    if (name == "parallel_armijo") return LineSearchMethod::parallel_armijo;
    if (name == "backtracking_wolfe") return LineSearchMethod::backtracking_wolfe;
    if (name == "backtracking_strong_wolfe") return LineSearchMethod::backtracking_strong_wolfe;
    throw ConfigError("unknown line search: " + name);
}

inline std::string linesearch_name(LineSearchMethod m) {
    switch (m) {
        case LineSearchMethod::backtracking_armijo: return "backtracking_armijo";
        case LineSearchMethod::parallel_armijo: return "parallel_armijo";
        case LineSearchMethod::backtracking_wolfe: return "backtracking_wolfe";
        case LineSearchMethod::backtracking_strong_wolfe: return "backtracking_strong_wolfe";
    }
    throw ConfigError("linesearch_name: bad enum value");
}

struct LineSearchConfig {
    LineSearchMethod method = LineSearchMethod::parallel_armijo;
    double c1 = 1e-4;
    double c2 = 0.9;
    // Decay base. tau > 1 means alpha <- alpha / tau; a value in (0, 1) is
    // accepted as the multiplicative factor directly.
    double tau = 1.5;
    int num_candidates = 10;
    double alpha_init = 1.0;

    double tau_eff() const { return tau > 1.0 ? 1.0 / tau : tau; }

    void validate() const {
        if (!(c1 > 0.0 && c1 < c2 && c2 < 1.0))
            throw ConfigError("line search requires 0 < c1 < c2 < 1");
        if (!(tau > 0.0) || tau == 1.0)
            throw ConfigError("line search decay base tau must be positive and != 1");
        if (num_candidates < 1) throw ConfigError("line search needs at least one candidate");
        if (!(alpha_init > 0.0)) throw ConfigError("line search alpha_init must be positive");
    }
};

/// Descending candidate step sizes alpha_init * tau_eff^m, m = 0..M-1.
inline std::vector<double> candidate_grid(const LineSearchConfig& cfg) {
    cfg.validate();
    std::vector<double> grid(static_cast<std::size_t>(cfg.num_candidates));
    double alpha = cfg.alpha_init;
    for (auto& a : grid) {
        a = alpha;
        alpha *= cfg.tau_eff();
    }
    return grid;
}

enum class StopRule { change, grad_norm };

inline StopRule parse_stop_rule(const std::string& name) {
    if (name == "change") return StopRule::change;
    if (name == "grad_norm") return StopRule::grad_norm;
    throw ConfigError("unknown stopping rule: " + name);
}

enum class ConjugateMethod { none, lbfgs, adam };

inline ConjugateMethod parse_conjugate_method(const std::string& name) {
    if (name == "none") return ConjugateMethod::none;
    if (name == "lbfgs") return ConjugateMethod::lbfgs;
    if (name == "adam") return ConjugateMethod::adam;
    throw ConfigError("unknown conjugate solver: " + name);
}

inline std::string conjugate_method_name(ConjugateMethod m) {
    switch (m) {
        case ConjugateMethod::none: return "none";
        case ConjugateMethod::lbfgs: return "lbfgs";
        case ConjugateMethod::adam: return "adam";
    }
    throw ConfigError("conjugate_method_name: bad enum value");
}

struct ConjugateConfig {
    ConjugateMethod method = ConjugateMethod::lbfgs;
    LineSearchConfig linesearch{};
    // Stop a row once every coordinate moved by less than tol in one
    // iteration (StopRule::change), or once the gradient sup-norm drops to
    // grad_tol (StopRule::grad_norm).
    StopRule stop = StopRule::change;
    double tol = 1e-3;
    double grad_tol = 0.1;
    int max_iter = 100;
    int memory = 10;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_lr_init = 0.1;
    double adam_lr_final = 1e-5;

    void validate() const {
        linesearch.validate();
        if (!(tol > 0.0)) throw ConfigError("conjugate tol must be positive");
        if (!(grad_tol > 0.0)) throw ConfigError("conjugate grad_tol must be positive");
        if (max_iter < 1) throw ConfigError("conjugate max_iter must be >= 1");
        if (memory < 1) throw ConfigError("conjugate memory must be >= 1");
        if (!(adam_lr_init > 0.0) || !(adam_lr_final > 0.0))
            throw ConfigError("conjugate adam learning rates must be positive");
    }
};

// ---------------------------------------------------------------------------
// Line-search conditions on precomputed scalars
// ---------------------------------------------------------------------------

/// Sufficient-decrease margin g(alpha) = J(x) + c1 alpha p.grad J(x) - J(x+alpha p).
/// The step is acceptable iff g(alpha) >= 0.
inline double armijo_condition(double j0, double dphi0, double j_alpha, double alpha, double c1) {
    return j0 + c1 * alpha * dphi0 - j_alpha;
}

struct WolfeFlags {
    bool armijo_ok = false;
    bool curvature_ok = false;
    bool strong_ok = false;
};

/// dphi0 = p.grad J(x), dphi_alpha = p.grad J(x + alpha p).
inline WolfeFlags wolfe_checks(double j0, double dphi0, double j_alpha, double dphi_alpha,
                               double alpha, double c1, double c2) {
    WolfeFlags flags;
    flags.armijo_ok = armijo_condition(j0, dphi0, j_alpha, alpha, c1) >= 0.0;
    flags.curvature_ok = -dphi_alpha <= -c2 * dphi0;
    flags.strong_ok = std::abs(dphi_alpha) <= c2 * std::abs(dphi0);
    return flags;
}

// ---------------------------------------------------------------------------
// Per-row limited-memory BFGS state
// ---------------------------------------------------------------------------

class LbfgsState {
  public:
    explicit LbfgsState(int memory) : memory_(memory) {
        if (memory < 1) throw ConfigError("LbfgsState: memory must be >= 1");
    }

    void set_iterate(Vector x, Vector g) {
        x_ = std::move(x);
        g_ = std::move(g);
        primed_ = true;
    }

    const Vector& x() const { return x_; }
    const Vector& g() const { return g_; }
    int pairs() const { return static_cast<int>(s_.size()); }

    /// Initial inverse-Hessian scaling from the newest stored pair.
    double gamma() const {
        if (s_.empty()) return 1.0;
        return s_.back().dot(y_.back()) / y_.back().dot(y_.back());
    }

    /// Two-loop recursion: p = -H g with H built from the stored pairs.
    Vector direction() const {
        if (!primed_) throw NumericalError("LbfgsState: direction() before set_iterate()");
        Vector q = g_;
        const int k = pairs();
        std::vector<double> a(static_cast<std::size_t>(k));
        for (int i = k - 1; i >= 0; --i) {
            const auto u = static_cast<std::size_t>(i);
            a[u] = rho_[u] * s_[u].dot(q);
            q -= a[u] * y_[u];
        }
        q *= gamma();
        for (int i = 0; i < k; ++i) {
            const auto u = static_cast<std::size_t>(i);
            const double b = rho_[u] * y_[u].dot(q);
            q += (a[u] - b) * s_[u];
        }
        return -q;
    }

    /// Advance to (x_new, g_new), storing the displacement pair only when it
    /// passes the curvature guard s.y > 1e-10. Returns whether it was stored.
    bool update(const Vector& x_new, const Vector& g_new) {
        if (!primed_) throw NumericalError("LbfgsState: update() before set_iterate()");
        Vector s = x_new - x_;
        Vector y = g_new - g_;
        const double sy = s.dot(y);
        const bool accept = sy > kCurvatureGuard;
        if (accept) {
            s_.push_back(std::move(s));
            y_.push_back(std::move(y));
            rho_.push_back(1.0 / sy);
            if (pairs() > memory_) {
                s_.pop_front();
                y_.pop_front();
                rho_.pop_front();
            }
        }
        x_ = x_new;
        g_ = g_new;
        return accept;
    }

    static constexpr double kCurvatureGuard = 1e-10;

  private:
    int memory_;
    bool primed_ = false;
    Vector x_, g_;
    std::deque<Vector> s_, y_;
    std::deque<double> rho_;
};

// ---------------------------------------------------------------------------
// Result
// ---------------------------------------------------------------------------

struct ConjugateResult {
    Batch x_star;
    Vector j_values;
    Vector grad_inf_norms;
    Eigen::VectorXi iters;
    std::vector<std::uint8_t> converged;
    std::vector<std::uint8_t> failed;   // NaN/Inf encountered; row frozen at last good iterate
    std::vector<std::uint8_t> no_step;  // line search found no acceptable step at least once

    Eigen::Index rows() const { return x_star.rows(); }

    double fraction_converged() const {
        if (converged.empty()) return 1.0;
        double n = 0;
        for (auto c : converged) n += c ? 1.0 : 0.0;
        return n / static_cast<double>(converged.size());
    }

    double mean_iters() const {
        if (iters.size() == 0) return 0.0;
        return iters.cast<double>().mean();
    }
};

// ---------------------------------------------------------------------------
// Batched solver internals
// ---------------------------------------------------------------------------

namespace detail {

enum class RowState : std::uint8_t { active = 0, converged = 1, failed = 2, frozen = 3 };

/// Evaluate J (and optionally G) on a packed iterate block, masking rows whose
/// iterates are not finite and rows whose outputs come back not finite.
/// Masked rows are zero-filled before the model call so the row-wise kernels
/// never see non-finite input; their outputs are overwritten with NaN.
/// Because every kernel is row-local, the zero filler cannot perturb other
/// rows' values.
inline void screened_eval(const ConjugateObjective& obj, const Batch& x,
                          const std::vector<Eigen::Index>& rows, bool with_grad, Vector& j,
                          Batch* g, std::vector<std::uint8_t>& bad) {
    const Eigen::Index n = x.rows();
    bad.assign(static_cast<std::size_t>(n), 0);
    Batch x_safe = x;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!x.row(i).allFinite()) {
            bad[static_cast<std::size_t>(i)] = 1;
            x_safe.row(i).setZero();
        }
    }
    if (with_grad) {
        j = obj.value_grad(x_safe, rows, *g);
    } else {
        j = obj.value(x_safe, rows);
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (Eigen::Index i = 0; i < n; ++i) {
        auto& flag = bad[static_cast<std::size_t>(i)];
        if (!flag && (!std::isfinite(j(i)) || (with_grad && !g->row(i).allFinite()))) flag = 1;
        if (flag) {
            j(i) = nan;
            if (with_grad) g->row(i).setConstant(nan);
        }
    }
}

struct LineSearchOutcome {
    double alpha = 0.0;
    bool accepted = false;  // the method's full condition set held
    bool fallback = false;  // Wolfe variants: fell back to an Armijo-only step
    bool no_step = false;   // no candidate acceptable
};

/// Parallel Armijo: every candidate for every row goes into one stacked
/// objective evaluation; each row takes the largest acceptable candidate.
inline std::vector<LineSearchOutcome> parallel_armijo_search(
    const ConjugateObjective& obj, const Batch& x, const Vector& j0, const Batch& p,
    const Vector& dphi0, const std::vector<Eigen::Index>& rows, const LineSearchConfig& cfg) {
    const std::vector<double> grid = candidate_grid(cfg);
    const Eigen::Index n_rows = x.rows();
    const auto n_cand = static_cast<Eigen::Index>(grid.size());

    Batch stacked(n_rows * n_cand, x.cols());
    std::vector<Eigen::Index> stacked_rows(static_cast<std::size_t>(n_rows * n_cand));
    for (Eigen::Index c = 0; c < n_cand; ++c) {
        for (Eigen::Index i = 0; i < n_rows; ++i) {
            const Eigen::Index k = c * n_rows + i;
            stacked.row(k) = x.row(i) + grid[static_cast<std::size_t>(c)] * p.row(i);
            stacked_rows[static_cast<std::size_t>(k)] = rows[static_cast<std::size_t>(i)];
        }
    }
    Vector j_cand;
    std::vector<std::uint8_t> bad;
    screened_eval(obj, stacked, stacked_rows, false, j_cand, nullptr, bad);

    std::vector<LineSearchOutcome> out(static_cast<std::size_t>(n_rows));
    for (Eigen::Index i = 0; i < n_rows; ++i) {
        auto& o = out[static_cast<std::size_t>(i)];
        for (Eigen::Index c = 0; c < n_cand; ++c) {
            const Eigen::Index k = c * n_rows + i;
            if (bad[static_cast<std::size_t>(k)]) continue;
            const double alpha = grid[static_cast<std::size_t>(c)];
            if (armijo_condition(j0(i), dphi0(i), j_cand(k), alpha, cfg.c1) >= 0.0) {
                o.alpha = alpha;
                o.accepted = true;
                break;  // grid is descending, so the first hit is the largest
            }
        }
        if (!o.accepted) o.no_step = true;
    }
    return out;
}

/// Backtracking searches: walk the descending grid, evaluating only rows that
/// have not accepted yet. Armijo-only keeps the smallest candidate when all
/// fail; the Wolfe variants first fall back to the largest Armijo-only step.
inline std::vector<LineSearchOutcome> backtracking_search(
    const ConjugateObjective& obj, const Batch& x, const Vector& j0, const Batch& p,
    const Vector& dphi0, const std::vector<Eigen::Index>& rows, const LineSearchConfig& cfg) {
    const std::vector<double> grid = candidate_grid(cfg);
    const Eigen::Index n_rows = x.rows();
    const bool wolfe = cfg.method == LineSearchMethod::backtracking_wolfe ||
                       cfg.method == LineSearchMethod::backtracking_strong_wolfe;
    const bool strong = cfg.method == LineSearchMethod::backtracking_strong_wolfe;

    std::vector<LineSearchOutcome> out(static_cast<std::size_t>(n_rows));
    std::vector<double> armijo_alpha(static_cast<std::size_t>(n_rows), -1.0);
    std::vector<Eigen::Index> pending(static_cast<std::size_t>(n_rows));
    for (Eigen::Index i = 0; i < n_rows; ++i) pending[static_cast<std::size_t>(i)] = i;

    for (const double alpha : grid) {
        if (pending.empty()) break;
        const auto n_pend = static_cast<Eigen::Index>(pending.size());
        Batch trial(n_pend, x.cols());
        std::vector<Eigen::Index> trial_rows(static_cast<std::size_t>(n_pend));
        for (Eigen::Index k = 0; k < n_pend; ++k) {
            const Eigen::Index i = pending[static_cast<std::size_t>(k)];
            trial.row(k) = x.row(i) + alpha * p.row(i);
            trial_rows[static_cast<std::size_t>(k)] = rows[static_cast<std::size_t>(i)];
        }
        Vector j_trial;
        Batch g_trial;
        std::vector<std::uint8_t> bad;
        screened_eval(obj, trial, trial_rows, wolfe, j_trial, wolfe ? &g_trial : nullptr, bad);

        std::vector<Eigen::Index> still_pending;
        for (Eigen::Index k = 0; k < n_pend; ++k) {
            const Eigen::Index i = pending[static_cast<std::size_t>(k)];
            auto& o = out[static_cast<std::size_t>(i)];
            bool accept = false;
            if (!bad[static_cast<std::size_t>(k)]) {
                if (wolfe) {
                    const double dphi_alpha = p.row(i).dot(g_trial.row(k));
                    const WolfeFlags flags =
                        wolfe_checks(j0(i), dphi0(i), j_trial(k), dphi_alpha, alpha, cfg.c1, cfg.c2);
                    accept = flags.armijo_ok && (strong ? flags.strong_ok : flags.curvature_ok);
                    if (!accept && flags.armijo_ok && armijo_alpha[static_cast<std::size_t>(i)] < 0.0)
                        armijo_alpha[static_cast<std::size_t>(i)] = alpha;
                } else {
                    accept =
                        armijo_condition(j0(i), dphi0(i), j_trial(k), alpha, cfg.c1) >= 0.0;
                }
            }
            if (accept) {
                o.alpha = alpha;
                o.accepted = true;
            } else {
                still_pending.push_back(i);
            }
        }
        pending.swap(still_pending);
    }

    for (const Eigen::Index i : pending) {
        auto& o = out[static_cast<std::size_t>(i)];
        const double armijo_only = armijo_alpha[static_cast<std::size_t>(i)];
        if (wolfe && armijo_only > 0.0) {
            o.alpha = armijo_only;
            o.fallback = true;
        } else {
            o.alpha = grid.back();
            o.no_step = true;
        }
    }
    return out;
}

inline std::vector<LineSearchOutcome> run_line_search(const ConjugateObjective& obj, const Batch& x,
                                                      const Vector& j0, const Batch& p,
                                                      const Vector& dphi0,
                                                      const std::vector<Eigen::Index>& rows,
                                                      const LineSearchConfig& cfg) {
    if (cfg.method == LineSearchMethod::parallel_armijo)
        return parallel_armijo_search(obj, x, j0, p, dphi0, rows, cfg);
    return backtracking_search(obj, x, j0, p, dphi0, rows, cfg);
}

/// Shared per-row bookkeeping for both solvers.
struct SolveBook {
    Batch x;
    Vector j;
    Batch g;
    std::vector<RowState> state;
    Eigen::VectorXi iters;
    std::vector<std::uint8_t> no_step;

    SolveBook(const ConjugateObjective& obj, const Batch& x_init)
        : x(x_init), state(static_cast<std::size_t>(x_init.rows()), RowState::active),
          iters(Eigen::VectorXi::Zero(x_init.rows())),
          no_step(static_cast<std::size_t>(x_init.rows()), 0) {
        std::vector<Eigen::Index> all(static_cast<std::size_t>(x.rows()));
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<Eigen::Index>(i);
        std::vector<std::uint8_t> bad;
        screened_eval(obj, x, all, true, j, &g, bad);
        for (std::size_t i = 0; i < bad.size(); ++i)
            if (bad[i]) state[i] = RowState::failed;
    }

    std::vector<Eigen::Index> active_rows() const {
        std::vector<Eigen::Index> rows;
        for (std::size_t i = 0; i < state.size(); ++i)
            if (state[i] == RowState::active) rows.push_back(static_cast<Eigen::Index>(i));
        return rows;
    }

    ConjugateResult finish() const {
        ConjugateResult res;
        res.x_star = x;
        res.j_values = j;
        res.iters = iters;
        res.no_step = no_step;
        res.grad_inf_norms.resize(x.rows());
        res.converged.resize(state.size());
        res.failed.resize(state.size());
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const auto u = static_cast<std::size_t>(i);
            res.grad_inf_norms(i) = g.row(i).allFinite()
                                        ? g.row(i).cwiseAbs().maxCoeff()
                                        : std::numeric_limits<double>::quiet_NaN();
            res.converged[u] = state[u] == RowState::converged ? 1 : 0;
            res.failed[u] = state[u] == RowState::failed ? 1 : 0;
        }
        return res;
    }

    bool row_done(Eigen::Index i, const ConjugateConfig& cfg, double change_inf) const {
        if (cfg.stop == StopRule::change) return change_inf < cfg.tol;
        return g.row(i).cwiseAbs().maxCoeff() <= cfg.grad_tol;
    }
};

inline ConjugateResult lbfgs_minimize(const ConjugateObjective& obj, const Batch& x_init,
                                      const ConjugateConfig& cfg) {
    SolveBook book(obj, x_init);
    const Eigen::Index dim = x_init.cols();

    std::vector<LbfgsState> states;
    states.reserve(static_cast<std::size_t>(x_init.rows()));
    for (Eigen::Index i = 0; i < x_init.rows(); ++i) {
        states.emplace_back(cfg.memory);
        if (book.state[static_cast<std::size_t>(i)] == RowState::active)
            states.back().set_iterate(book.x.row(i), book.g.row(i));
    }

    // A gradient-based stopping rule can already hold at the warm start.
    if (cfg.stop == StopRule::grad_norm) {
        for (Eigen::Index i = 0; i < x_init.rows(); ++i) {
            const auto u = static_cast<std::size_t>(i);
            if (book.state[u] == RowState::active && book.row_done(i, cfg, 0.0))
                book.state[u] = RowState::converged;
        }
    }

    for (int it = 1; it <= cfg.max_iter; ++it) {
        const std::vector<Eigen::Index> act = book.active_rows();
        if (act.empty()) break;
        const auto n_act = static_cast<Eigen::Index>(act.size());

        Batch x_act(n_act, dim), p(n_act, dim);
        Vector j_act(n_act), dphi0(n_act);
        for (Eigen::Index k = 0; k < n_act; ++k) {
            const Eigen::Index i = act[static_cast<std::size_t>(k)];
            x_act.row(k) = book.x.row(i);
            j_act(k) = book.j(i);
            p.row(k) = states[static_cast<std::size_t>(i)].direction();
            dphi0(k) = p.row(k).dot(book.g.row(i));
        }

        const std::vector<LineSearchOutcome> ls =
            run_line_search(obj, x_act, j_act, p, dphi0, act, cfg.linesearch);

        // Rows that step this iteration (parallel Armijo freezes its failures).
        std::vector<Eigen::Index> stepping;
        for (Eigen::Index k = 0; k < n_act; ++k) {
            const Eigen::Index i = act[static_cast<std::size_t>(k)];
            const auto& o = ls[static_cast<std::size_t>(k)];
            const auto u = static_cast<std::size_t>(i);
            if (o.no_step || o.fallback) book.no_step[u] = 1;
            book.iters(i) = it;
            if (o.no_step && cfg.linesearch.method == LineSearchMethod::parallel_armijo) {
                book.state[u] = RowState::frozen;
            } else {
                stepping.push_back(k);
            }
        }
        if (stepping.empty()) continue;

        const auto n_step = static_cast<Eigen::Index>(stepping.size());
        Batch x_new(n_step, dim);
        std::vector<Eigen::Index> step_rows(static_cast<std::size_t>(n_step));
        for (Eigen::Index s = 0; s < n_step; ++s) {
            const Eigen::Index k = stepping[static_cast<std::size_t>(s)];
            x_new.row(s) = x_act.row(k) + ls[static_cast<std::size_t>(k)].alpha * p.row(k);
            step_rows[static_cast<std::size_t>(s)] = act[static_cast<std::size_t>(k)];
        }
        Vector j_new;
        Batch g_new;
        std::vector<std::uint8_t> bad;
        screened_eval(obj, x_new, step_rows, true, j_new, &g_new, bad);

        for (Eigen::Index s = 0; s < n_step; ++s) {
            const Eigen::Index i = step_rows[static_cast<std::size_t>(s)];
            const auto u = static_cast<std::size_t>(i);
            if (bad[static_cast<std::size_t>(s)]) {
                book.state[u] = RowState::failed;  // keep the last good iterate
                continue;
            }
            const double change_inf = (x_new.row(s) - book.x.row(i)).cwiseAbs().maxCoeff();
            states[u].update(x_new.row(s), g_new.row(s));
            book.x.row(i) = x_new.row(s);
            book.j(i) = j_new(s);
            book.g.row(i) = g_new.row(s);
            if (book.row_done(i, cfg, change_inf)) book.state[u] = RowState::converged;
        }
    }
    return book.finish();
}

inline ConjugateResult adam_minimize_impl(const ConjugateObjective& obj, const Batch& x_init,
                                          const ConjugateConfig& cfg) {
    SolveBook book(obj, x_init);
    const Eigen::Index dim = x_init.cols();

    std::vector<Adam> opts(static_cast<std::size_t>(x_init.rows()), Adam(dim));

    if (cfg.stop == StopRule::grad_norm) {
        for (Eigen::Index i = 0; i < x_init.rows(); ++i) {
            const auto u = static_cast<std::size_t>(i);
            if (book.state[u] == RowState::active && book.row_done(i, cfg, 0.0))
                book.state[u] = RowState::converged;
        }
    }

    for (int it = 1; it <= cfg.max_iter; ++it) {
        const std::vector<Eigen::Index> act = book.active_rows();
        if (act.empty()) break;
        const auto n_act = static_cast<Eigen::Index>(act.size());

        // A row's step count always equals the global iteration index while it
        // is active, so the annealed rate matches an isolated solve exactly.
        const double lr = cosine_lr_between(it - 1, cfg.max_iter, cfg.adam_lr_init,
                                            cfg.adam_lr_final);

        Batch x_new(n_act, dim);
        for (Eigen::Index k = 0; k < n_act; ++k) {
            const Eigen::Index i = act[static_cast<std::size_t>(k)];
            Vector xi = book.x.row(i);
            const Vector gi = book.g.row(i);
            opts[static_cast<std::size_t>(i)].step(xi, gi, lr, cfg.adam_beta1, cfg.adam_beta2);
            x_new.row(k) = xi;
        }

        Vector j_new;
        Batch g_new;
        std::vector<std::uint8_t> bad;
        screened_eval(obj, x_new, act, true, j_new, &g_new, bad);

        for (Eigen::Index k = 0; k < n_act; ++k) {
            const Eigen::Index i = act[static_cast<std::size_t>(k)];
            const auto u = static_cast<std::size_t>(i);
            book.iters(i) = it;
            if (bad[static_cast<std::size_t>(k)]) {
                book.state[u] = RowState::failed;
                continue;
            }
            const double change_inf = (x_new.row(k) - book.x.row(i)).cwiseAbs().maxCoeff();
            book.x.row(i) = x_new.row(k);
            book.j(i) = j_new(k);
            book.g.row(i) = g_new.row(k);
            if (book.row_done(i, cfg, change_inf)) book.state[u] = RowState::converged;
        }
    }
    return book.finish();
}

inline ConjugateResult no_solver_result(const ConjugateObjective& obj, const Batch& x_init) {
    SolveBook book(obj, x_init);
    for (auto& s : book.state)
        if (s == RowState::active) s = RowState::converged;  // nothing was requested
    return book.finish();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Entry points
// ---------------------------------------------------------------------------

inline ConjugateResult adam_minimize(const PotentialModel& f, const ParamVector& params,
                                     const Batch& targets, const Batch& x_init,
                                     const ConjugateConfig& cfg) {
    cfg.validate();
    if (x_init.rows() != targets.rows() || x_init.cols() != targets.cols())
        throw DimensionError("adam_minimize: x_init and targets must have identical shape");
    ConjugateObjective obj(f, params, targets);
    return detail::adam_minimize_impl(obj, x_init, cfg);
}

inline ConjugateResult conjugate(const PotentialModel& f, const ParamVector& params,
                                 const Batch& targets, const Batch& x_init,
                                 const ConjugateConfig& cfg) {
    cfg.validate();
    if (x_init.rows() != targets.rows() || x_init.cols() != targets.cols())
        throw DimensionError("conjugate: x_init and targets must have identical shape");
    ConjugateObjective obj(f, params, targets);
    switch (cfg.method) {
        case ConjugateMethod::none: return detail::no_solver_result(obj, x_init);
        case ConjugateMethod::lbfgs: return detail::lbfgs_minimize(obj, x_init, cfg);
        case ConjugateMethod::adam: return detail::adam_minimize_impl(obj, x_init, cfg);
    }
    throw ConfigError("conjugate: bad solver enum");
}

}  // namespace w2dual
