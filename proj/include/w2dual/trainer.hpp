#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "w2dual/adam.hpp"
#include "w2dual/amortization.hpp"
#include "w2dual/common.hpp"
#include "w2dual/conjugate.hpp"
#include "w2dual/evaluation.hpp"
#include "w2dual/measures.hpp"
#include "w2dual/potentials.hpp"
#include "w2dual/rng.hpp"

namespace w2dual {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct TrainConfig {
    std::int64_t n_iters = 250000;
    Eigen::Index batch_size = 1024;
    double lr_init = 5e-4;
    double beta1 = 0.5;
    double beta2 = 0.5;
    double cosine_floor = 1e-4;  // relative floor of the cosine schedule

    ConjugateConfig conjugate{};
    AmortLoss loss = AmortLoss::objective;
    bool connect_potential = false;  // couple f into the cycle-loss update

    bool pretrain = true;
    PretrainConfig pretrain_cfg{};

    std::uint64_t seed = 0;
    bool swap_direction = false;  // train the β→α direction instead

    std::int64_t eval_every = 1000;       // ℒ²-UVP cadence (when ground truth exists)
    Eigen::Index eval_samples = 4096;
    Eigen::Index final_eval_samples = 16384;
    std::int64_t checkpoint_every = 0;  // 0 → only on request/crash

    /// Defaults for the D-dimensional experiments.
    static TrainConfig defaults_nd() { return TrainConfig{}; }

    /// Defaults for the 2-D synthetic experiments.
    static TrainConfig defaults_2d() {
        TrainConfig cfg;
        cfg.n_iters = 50000;
        cfg.batch_size = 10000;
        return cfg;
    }

    void validate() const {
        conjugate.validate();
        if (n_iters < 1) throw ConfigError("train.n_iters must be >= 1");
        if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
        if (!(lr_init > 0.0)) throw ConfigError("train.lr_init must be positive");
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
            throw ConfigError("train.adam_betas must lie in [0, 1)");
        if (!(cosine_floor > 0.0 && cosine_floor <= 1.0))
            throw ConfigError("train.cosine_floor must lie in (0, 1]");
        if (eval_every < 1) throw ConfigError("train.eval_every must be >= 1");
        if (eval_samples < 2 || final_eval_samples < 2)
            throw ConfigError("train.eval_samples must be >= 2");
        if (checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
        if (loss == AmortLoss::regression && conjugate.method == ConjugateMethod::none)
            throw ConfigError(
                "amortization.loss=regression needs conjugate solutions as targets; "
                "it cannot run with conjugate.solver=none");
    }
};

struct TrainState {
    ParamVector theta;
    ParamVector phi;
    Adam opt_theta;
    Adam opt_phi;
    std::int64_t step = 0;
    std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// Dual objective (Monte-Carlo estimate) and its envelope gradient
// ---------------------------------------------------------------------------

/// V̂ = −mean f(X) + mean [f(X_star) − ⟨X_star, Y⟩]. With exact conjugates the
/// second term is −mean f*(Y); with approximate ones it upper-bounds it.
inline double dual_value(const PotentialModel& f, const ParamVector& theta,
                         const Eigen::Ref<const Batch>& x, const Eigen::Ref<const Batch>& x_star,
                         const Eigen::Ref<const Batch>& y) {
    if (x.cols() != f.dim() || y.cols() != f.dim())
        throw DimensionError("dual_value: batch dimension mismatch");
    if (x_star.rows() != y.rows() || x_star.cols() != y.cols())
        throw DimensionError("dual_value: X_star must pair with Y rowwise");
    Vector fx, fs;
    f.value(theta, x, fx);
    f.value(theta, x_star, fs);
    Vector j = fs - QuadraticSkip::row_dots(x_star, y);
    const double v = -kahan_mean(fx) + kahan_mean(j);
    if (!std::isfinite(v))
        throw NumericalError("dual_value: non-finite estimate (alpha term " +
                             std::to_string(kahan_mean(fx)) + ", conjugate term " +
                             std::to_string(kahan_mean(j)) + ")");
    return v;
}

/// Envelope gradient of V̂: the conjugate points are constants, so only the
/// two f-evaluations contribute: −mean ∇_θ f(X) + mean ∇_θ f(X_star).
inline ParamVector dual_grad(const PotentialModel& f, const ParamVector& theta,
                             const Eigen::Ref<const Batch>& x,
                             const Eigen::Ref<const Batch>& x_star,
                             const Eigen::Ref<const Batch>& y) {
    if (x.cols() != f.dim() || y.cols() != f.dim())
        throw DimensionError("dual_grad: batch dimension mismatch");
    if (x_star.rows() != y.rows() || x_star.cols() != y.cols())
        throw DimensionError("dual_grad: X_star must pair with Y rowwise");
    // The two mean-gradients accumulate separately and subtract at the end, so
    // identical batches cancel bitwise (X_star == X gives exactly zero).
    ParamVector g_alpha(f.layout());
    ParamVector g(f.layout());
    Vector wx = Vector::Constant(x.rows(), 1.0 / static_cast<double>(x.rows()));
    f.backprop(theta, x, nullptr, &wx, nullptr, &g_alpha, nullptr);
    Vector ws = Vector::Constant(x_star.rows(), 1.0 / static_cast<double>(x_star.rows()));
    f.backprop(theta, x_star, nullptr, &ws, nullptr, &g, nullptr);
    g.values() -= g_alpha.values();
    return g;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct MetricsRow {
    std::int64_t step = 0;
    double dual_value = 0.0;
    double mean_conj_iters = 0.0;
    double mean_conj_grad_norm = 0.0;
    double amort_loss = 0.0;
    double l2_uvp = std::numeric_limits<double>::quiet_NaN();  // NaN → not evaluated
    double wall_ms = 0.0;
};

inline constexpr const char* kMetricsHeader =
    "step,dual_value,mean_conj_iters,mean_conj_grad_norm,amort_loss,l2_uvp,wall_ms";

inline void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows) {
    os << kMetricsHeader << '\n';
    os << std::setprecision(17);
    for (const auto& r : rows) {
        os << r.step << ',' << r.dual_value << ',' << r.mean_conj_iters << ','
           << r.mean_conj_grad_norm << ',' << r.amort_loss << ',';
        if (std::isfinite(r.l2_uvp)) os << r.l2_uvp;
        os << ',' << r.wall_ms << '\n';
    }
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<double> to_std(const Vector& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

inline Vector from_std(const std::vector<double>& v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
    return out;
}

inline nlohmann::json adam_to_json(const Adam& a) {
    return nlohmann::json{{"m", to_std(a.m())}, {"v", to_std(a.v())}, {"t", a.t()}};
}

inline void adam_from_json(const nlohmann::json& j, Adam& a) {
    a.restore(from_std(j.at("m").get<std::vector<double>>()),
              from_std(j.at("v").get<std::vector<double>>()), j.at("t").get<std::int64_t>());
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const TrainState& st) {
    nlohmann::json j;
    j["step"] = st.step;
    j["seed"] = st.seed;
    j["theta"] = detail::to_std(st.theta.values());
    j["phi"] = detail::to_std(st.phi.values());
    j["opt_theta"] = detail::adam_to_json(st.opt_theta);
    j["opt_phi"] = detail::adam_to_json(st.opt_phi);
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw ConfigError("save_checkpoint: cannot open " + path);
    os << j.dump(1) << '\n';
    if (!os) throw ConfigError("save_checkpoint: write failed for " + path);
}

inline TrainState load_checkpoint(const std::string& path, const PotentialModel& f,
                                  const AmortModel& amort) {
    std::ifstream is(path);
    if (!is) throw ConfigError("load_checkpoint: cannot open " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("load_checkpoint: malformed JSON in " + path + ": " + e.what());
    }
    TrainState st;
    st.step = j.at("step").get<std::int64_t>();
    st.seed = j.at("seed").get<std::uint64_t>();
    st.theta = ParamVector(f.layout());
    st.theta.values() = detail::from_std(j.at("theta").get<std::vector<double>>());
    st.phi = ParamVector(amort.layout());
    st.phi.values() = detail::from_std(j.at("phi").get<std::vector<double>>());
    if (st.theta.size() != f.layout()->size() || st.phi.size() != amort.layout()->size())
        throw ConfigError("load_checkpoint: parameter sizes do not match the models");
    st.opt_theta = Adam(st.theta.size());
    st.opt_phi = Adam(st.phi.size());
    detail::adam_from_json(j.at("opt_theta"), st.opt_theta);
    detail::adam_from_json(j.at("opt_phi"), st.opt_phi);
    return st;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainResult {
    TrainState state;
    std::vector<MetricsRow> metrics;
    bool pretrained = false;
    PretrainReport pre_theta;
    PretrainReport pre_phi;
    std::optional<double> final_uvp;  // 16384-sample estimate when ground truth exists
};

namespace detail {

/// Ground-truth map in the trained direction, when the task has one.
inline std::optional<AffineMap> effective_truth(const TaskSpec& task, bool swapped) {
    if (!task.gaussian_pair) return std::nullopt;
    if (!swapped) return task.ground_truth;
    GaussianPair rev;
    rev.mean_a = task.gaussian_pair->mean_b;
    rev.mean_b = task.gaussian_pair->mean_a;
    rev.cov_a = task.gaussian_pair->cov_b;
    rev.cov_b = task.gaussian_pair->cov_a;
    return gaussian_ground_truth_map(rev);
}

}  // namespace detail

/// Alternating dual ascent (Algorithm core): per step, predict conjugates with
/// the amortizer, fine-tune them with the configured solver, take one Adam
/// ascent step on θ through the envelope gradient, then one Adam descent step
/// on φ under the selected amortization loss. All randomness is derived from
/// (cfg.seed, step), so runs are reproducible and resumable.
///
/// `out_dir` (optional) receives periodic checkpoints and, on a numerical
/// abort, `crash_checkpoint.json` before the NumericalError propagates.
/// `resume` (optional) continues a checkpointed state; pretraining is skipped.
inline TrainResult train(const TaskSpec& task, const PotentialModel& f, const AmortModel& amort,
                         const TrainConfig& cfg, const std::string& out_dir = {},
                         const TrainState* resume = nullptr) {
    cfg.validate();
    const Sampler& alpha = cfg.swap_direction ? task.beta : task.alpha;
    const Sampler& beta = cfg.swap_direction ? task.alpha : task.beta;
    if (f.dim() != alpha.dim() || amort.dim() != beta.dim() || alpha.dim() != beta.dim())
        throw DimensionError("train: task, potential, and amortizer dimensions disagree");

    TrainResult result;
    TrainState& st = result.state;

    Stream derive(cfg.seed, 11);
    if (resume != nullptr) {
        if (resume->theta.size() != f.layout()->size() ||
            resume->phi.size() != amort.layout()->size())
            throw ConfigError("train: resume state does not match the models");
        st = *resume;
    } else {
        st.seed = cfg.seed;
        st.theta = f.init_params(derive.bits(0));
        st.phi = amort.init_params(derive.bits(1));
        f.actnorm_init(st.theta,
                       alpha.sample(std::min<Eigen::Index>(cfg.batch_size, 1024), derive.bits(2)));
        st.opt_theta = Adam(st.theta.size());
        st.opt_phi = Adam(st.phi.size());
        if (cfg.pretrain) {
            PretrainConfig pc = cfg.pretrain_cfg;
            pc.seed = derive.bits(3);
            result.pre_theta = pretrain_potential(f, st.theta, alpha, pc);
            pc.seed = derive.bits(4);
            result.pre_phi = pretrain_amortizer(amort, st.phi, beta, pc);
            result.pretrained = true;
        }
    }
    if (st.step >= cfg.n_iters)
        throw ConfigError("train: state is already at or past n_iters");

    const std::optional<AffineMap> truth = detail::effective_truth(task, cfg.swap_direction);
    MapFn learned = [&f, &st](const Eigen::Ref<const Batch>& xb) {
        return grad_input(f, st.theta, xb);
    };

    Stream x_seeds(cfg.seed, 31);
    Stream y_seeds(cfg.seed, 32);
    Stream eval_seeds(cfg.seed, 33);

    auto crash_dump = [&](const char* /*where*/) {
        if (!out_dir.empty()) save_checkpoint(out_dir + "/crash_checkpoint.json", st);
    };

    result.metrics.reserve(static_cast<std::size_t>(cfg.n_iters - st.step));
    for (std::int64_t t = st.step; t < cfg.n_iters; ++t) {
        const auto t0 = std::chrono::steady_clock::now();
        MetricsRow row;
        row.step = t;

        Batch x = alpha.sample(cfg.batch_size, x_seeds.bits(static_cast<std::uint64_t>(t)));
        Batch y = beta.sample(cfg.batch_size, y_seeds.bits(static_cast<std::uint64_t>(t)));

        try {
            Batch x_tilde = amort_predict(amort, st.phi, y);
            ConjugateResult conj = conjugate(f, st.theta, y, x_tilde, cfg.conjugate);
            row.mean_conj_iters = conj.mean_iters();
            row.mean_conj_grad_norm = kahan_mean(conj.grad_inf_norms);

            row.dual_value = dual_value(f, st.theta, x, conj.x_star, y);
            ParamVector g_theta = dual_grad(f, st.theta, x, conj.x_star, y);

            const Batch* targets = cfg.loss == AmortLoss::regression ? &conj.x_star : nullptr;
            AmortEval ev = amort_loss_grad(cfg.loss, f, st.theta, amort, st.phi, y, targets,
                                           cfg.connect_potential);
            row.amort_loss = ev.loss;

            // Adam minimizes, so ascent on V̂ feeds −∇V̂; the optional coupled
            // cycle term is a descent direction and enters with its own sign.
            Vector theta_step_grad = -g_theta.values();
            if (cfg.connect_potential && cfg.loss == AmortLoss::cycle)
                theta_step_grad += ev.theta_grad.values();

            const double lr = cosine_lr(t, cfg.n_iters, cfg.lr_init, cfg.cosine_floor);
            st.opt_theta.step(st.theta.values(), theta_step_grad, lr, cfg.beta1, cfg.beta2);
            st.opt_phi.step(st.phi.values(), ev.phi_grad.values(), lr, cfg.beta1, cfg.beta2);
            if (!st.theta.values().allFinite())
                throw NumericalError("train: potential parameters became non-finite at step " +
                                     std::to_string(t));
            if (!st.phi.values().allFinite())
                throw NumericalError("train: amortizer parameters became non-finite at step " +
                                     std::to_string(t));
            st.step = t + 1;

            if (truth && (t % cfg.eval_every == 0 || t + 1 == cfg.n_iters)) {
                UvpReport rep = l2_uvp(learned, *truth, alpha, beta, cfg.eval_samples,
                                       eval_seeds.bits(static_cast<std::uint64_t>(t)));
                row.l2_uvp = rep.uvp_percent;
            }
        } catch (const NumericalError&) {
            crash_dump("step");
            throw;
        }

        row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                                t0)
                          .count();
        result.metrics.push_back(row);

        if (!out_dir.empty() && cfg.checkpoint_every > 0 && st.step % cfg.checkpoint_every == 0)
            save_checkpoint(out_dir + "/checkpoint_" + std::to_string(st.step) + ".json", st);
    }

    if (truth) {
        UvpReport rep = l2_uvp(learned, *truth, alpha, beta, cfg.final_eval_samples,
                               eval_seeds.bits(static_cast<std::uint64_t>(cfg.n_iters)));
        result.final_uvp = rep.uvp_percent;
    }
    if (!out_dir.empty()) save_checkpoint(out_dir + "/checkpoint_final.json", st);
    return result;
}

}  // namespace w2dual
