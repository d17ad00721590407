#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "w2dual/common.hpp"
#include "w2dual/config.hpp"
#include "w2dual/conjugate.hpp"
#include "w2dual/evaluation.hpp"
#include "w2dual/measures.hpp"
#include "w2dual/potentials.hpp"
#include "w2dual/rng.hpp"
#include "w2dual/svg.hpp"
#include "w2dual/trainer.hpp"

namespace w2dual {

inline constexpr const char* kOutputRootEnv = "W2DUAL_OUTPUT_ROOT";

/// Relative output directories may be rerooted through the W2DUAL_OUTPUT_ROOT
/// environment variable; absolute paths are honored as given.
inline std::filesystem::path resolve_output_dir(const std::string& output_dir) {
    std::filesystem::path p(output_dir);
    if (p.is_absolute()) return p;
    if (const char* root = std::getenv(kOutputRootEnv); root != nullptr && *root != '\0')
        return std::filesystem::path(root) / p;
    return p;
}

namespace detail {

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot open output file: " + path.string());
    os << text;
    if (!os) throw ConfigError("failed writing output file: " + path.string());
}

/// Mean of J(x; y) = f(x) − ⟨x, y⟩ over paired rows.
inline double mean_j(const PotentialModel& f, const ParamVector& theta,
                     const Eigen::Ref<const Batch>& x, const Eigen::Ref<const Batch>& y) {
    Vector j = value_of(f, theta, x) - (x.array() * y.array()).rowwise().sum().matrix();
    return kahan_mean(j);
}

inline double sample_std(const std::vector<double>& v, double mean) {
    if (v.size() < 2) return 0.0;
    double acc = 0.0;
    for (double x : v) acc += (x - mean) * (x - mean);
    return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

/// Smallest origin-symmetric square [−m, m]² covering every row, padded 10%.
inline std::pair<double, double> square_bounds(const std::vector<const Batch*>& sets) {
    double m = 1e-9;
    for (const Batch* b : sets)
        if (b->size() > 0) m = std::max(m, b->array().abs().maxCoeff());
    m *= 1.1;
    return {-m, m};
}

/// Conjugate point x̆(y) = ∇f*(y): amortized prediction fine-tuned by the
/// given solver. This is the inverse-map evaluator behind all figures.
inline MapFn conjugate_map(const PotentialModel& f, const ParamVector& theta,
                           const AmortModel& amort, const ParamVector& phi,
                           ConjugateConfig solver) {
    return [&f, theta, &amort, phi, solver](const Eigen::Ref<const Batch>& y) {
        Batch init = amort_predict(amort, phi, y);
        return conjugate(f, theta, y, init, solver).x_star;
    };
}

inline void write_landscape_csv(std::ostream& os, const LandscapeGrid& g) {
    os << "row,col,x1,x2,j,mask\n" << std::setprecision(17);
    const double h = (g.hi - g.lo) / static_cast<double>(g.resolution - 1);
    for (Eigen::Index r = 0; r < g.resolution; ++r)
        for (Eigen::Index c = 0; c < g.resolution; ++c)
            os << r << ',' << c << ',' << g.lo + static_cast<double>(c) * h << ','
               << g.lo + static_cast<double>(r) * h << ',' << g.j(r, c) << ','
               << static_cast<int>(g.mask(r, c)) << '\n';
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Figure emission (shared by `train` and `export-figures`)
// ---------------------------------------------------------------------------

/// Writes pushforward / interpolation / landscape figures for a trained pair
/// (f, amortizer) on a 2-D task. Returns the artifact file names (relative to
/// `dir`). beta is the measure being inverted: figures show (∇f*)_# beta.
inline std::vector<std::string> emit_figure_set(const Sampler& alpha, const Sampler& beta,
                                                const PotentialModel& f, const ParamVector& theta,
                                                const AmortModel& amort, const ParamVector& phi,
                                                std::uint64_t seed, Eigen::Index n_samples,
                                                Eigen::Index resolution,
                                                const std::filesystem::path& dir) {
    if (alpha.dim() != 2 || beta.dim() != 2)
        throw ConfigError("figures are only emitted for 2-D tasks");
    std::filesystem::create_directories(dir);
    std::vector<std::string> files;
    Stream derive(seed, 63);
    const MapFn inverse = detail::conjugate_map(f, theta, amort, phi, synthetic_solver_config());

    // Push-forward scatter: alpha reference, beta source, (∇f*)_# beta.
    const PushforwardExport push = pushforward_export(inverse, beta, n_samples, derive.bits(0));
    const Batch alpha_ref = alpha.sample(n_samples, derive.bits(1));
    {
        std::ofstream csv(dir / "pushforward.csv");
        csv << "set_id,t,x1,x2\n" << std::setprecision(17);
        append_points_csv(csv, "alpha_ref", 0.0, alpha_ref);
        append_points_csv(csv, "beta_source", 0.0, push.source);
        append_points_csv(csv, "pushforward", 1.0, push.mapped);
        files.push_back("pushforward.csv");

        const auto [lo, hi] =
            detail::square_bounds({&alpha_ref, &push.source, &push.mapped});
        SvgCanvas svg(lo, hi, lo, hi);
        svg.add_frame();
        svg.add_points(alpha_ref, 2.5, "#bbbbbb", 0.6);
        svg.add_points(push.source, 2.5, "#2c7bb6", 0.6);
        svg.add_points(push.mapped, 2.5, "#d7191c", 0.6);
        svg.write((dir / "pushforward.svg").string());
        files.push_back("pushforward.svg");
    }

    // Displacement interpolation ((1−t)·I + t·∇f*)_# beta.
    const std::vector<double> t_values{0.0, 0.25, 0.5, 0.75, 1.0};
    const InterpolationExport interp =
        interpolation_export(inverse, beta, n_samples, derive.bits(0), t_values);
    {
        std::ofstream csv(dir / "interpolation.csv");
        csv << "set_id,t,x1,x2\n" << std::setprecision(17);
        std::vector<const Batch*> all;
        for (std::size_t k = 0; k < interp.frames.size(); ++k) {
            append_points_csv(csv, "frame" + std::to_string(k), interp.t_values[k],
                              interp.frames[k]);
            all.push_back(&interp.frames[k]);
        }
        files.push_back("interpolation.csv");

        const auto [lo, hi] = detail::square_bounds(all);
        SvgCanvas svg(lo, hi, lo, hi);
        svg.add_frame();
        for (std::size_t k = 0; k < interp.frames.size(); ++k)
            svg.add_points(interp.frames[k], 2.0,
                           detail::color_lerp("#2c7bb6", "#d7191c", interp.t_values[k]), 0.5);
        svg.write((dir / "interpolation.svg").string());
        files.push_back("interpolation.svg");
    }

    // Objective landscapes J(·; y) around two beta draws, masked above J(y; y).
    const Batch y_pts = beta.sample(2, derive.bits(2));
    const auto [lo, hi] = detail::square_bounds({&y_pts, &alpha_ref});
    for (Eigen::Index i = 0; i < y_pts.rows(); ++i) {
        const LandscapeGrid grid =
            landscape_export(f, theta, y_pts.row(i).transpose(), lo, hi, resolution);
        const std::string stem = "landscape_" + std::to_string(i);
        {
            std::ofstream csv(dir / (stem + ".csv"));
            detail::write_landscape_csv(csv, grid);
        }
        files.push_back(stem + ".csv");

        SvgCanvas svg(lo, hi, lo, hi);
        svg.add_heatmap(grid.j, grid.mask, lo, hi);
        svg.add_frame();
        svg.add_marker(grid.y(0), grid.y(1), "#000000");
        svg.add_marker(grid.x_star(0), grid.x_star(1), "#1a9641");
        svg.write((dir / (stem + ".svg")).string());
        files.push_back(stem + ".svg");
    }
    return files;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainRunResult {
    std::filesystem::path out_dir;
    nlohmann::json report;
};

/// Full training run: `trials` sequential trainings with seeds seed+i, each
/// into out/trial<i>/ (metrics.csv + checkpoints), plus the resolved config,
/// a summary report.json, and figures from the last trial (2-D tasks).
inline TrainRunResult run_train(const RunConfig& cfg, std::ostream& log) {
    cfg.validate();
    const std::filesystem::path out = resolve_output_dir(cfg.output_dir);
    std::filesystem::create_directories(out);
    detail::write_text_file(out / "config_effective.txt", cfg.to_text());

    const TaskSpec task = find_task(cfg.task);
    const Eigen::Index dim = task.alpha.dim();

    nlohmann::json report;
    report["task"] = cfg.task;
    report["seed"] = cfg.seed;
    report["trials"] = cfg.trials;
    report["potential"] = cfg.potential_kind;
    report["amortizer"] = cfg.amortizer_kind;
    report["loss"] = amort_loss_name(cfg.train.loss);
    report["solver"] = conjugate_method_name(cfg.train.conjugate.method);
    report["n_iters"] = cfg.train.n_iters;
    report["batch_size"] = cfg.train.batch_size;

    std::vector<double> uvp_values;
    std::vector<double> dual_finals;
    nlohmann::json trial_reports = nlohmann::json::array();
    std::shared_ptr<PotentialModel> last_f;
    std::shared_ptr<AmortModel> last_amort;
    TrainState last_state;

    for (int i = 0; i < cfg.trials; ++i) {
        const std::filesystem::path trial_dir = out / ("trial" + std::to_string(i));
        std::filesystem::create_directories(trial_dir);
        TrainConfig tc = cfg.train;
        tc.seed = cfg.seed + static_cast<std::uint64_t>(i);

        auto f = cfg.build_potential(dim);
        auto amort = cfg.build_amortizer(dim);
        log << "[train] trial " << i << " seed " << tc.seed << " (" << tc.n_iters
            << " steps)...\n";
        TrainResult res = train(task, *f, *amort, tc, trial_dir.string());
        {
            std::ofstream csv(trial_dir / "metrics.csv");
            write_metrics_csv(csv, res.metrics);
        }

        nlohmann::json tr;
        tr["seed"] = tc.seed;
        tr["pretrained"] = res.pretrained;
        const double dual_final = res.metrics.back().dual_value;
        tr["dual_value_final"] = dual_final;
        dual_finals.push_back(dual_final);
        nlohmann::json trace = nlohmann::json::array();
        for (const auto& row : res.metrics)
            if (row.step % cfg.train.eval_every == 0 || row.step + 1 == cfg.train.n_iters)
                trace.push_back({row.step, row.dual_value});
        tr["dual_value_trace"] = std::move(trace);
        if (res.final_uvp) {
            tr["l2_uvp_final"] = *res.final_uvp;
            uvp_values.push_back(*res.final_uvp);
            log << "[train] trial " << i << " final l2_uvp = " << *res.final_uvp << "%\n";
        } else {
            log << "[train] trial " << i << " final dual value = " << dual_final << '\n';
        }
        trial_reports.push_back(std::move(tr));

        last_f = std::move(f);
        last_amort = std::move(amort);
        last_state = std::move(res.state);
    }
    report["trial_results"] = std::move(trial_reports);

    double dual_mean = 0.0;
    for (double v : dual_finals) dual_mean += v;
    dual_mean /= static_cast<double>(dual_finals.size());
    report["dual_value_final_mean"] = dual_mean;

    if (uvp_values.size() == static_cast<std::size_t>(cfg.trials)) {
        double mean = 0.0;
        for (double v : uvp_values) mean += v;
        mean /= static_cast<double>(uvp_values.size());
        report["l2_uvp_final"] = {{"mean", mean},
                                  {"std", detail::sample_std(uvp_values, mean)},
                                  {"values", uvp_values}};
        log << "[train] l2_uvp over " << cfg.trials << " trials: mean = " << mean << "%\n";
    }

    if (dim == 2) {
        const Sampler& alpha = cfg.train.swap_direction ? task.beta : task.alpha;
        const Sampler& beta = cfg.train.swap_direction ? task.alpha : task.beta;
        const auto files = emit_figure_set(alpha, beta, *last_f, last_state.theta, *last_amort,
                                           last_state.phi, cfg.seed, 512, 161, out / "figures");
        nlohmann::json fig = nlohmann::json::array();
        for (const auto& name : files) fig.push_back("figures/" + name);
        report["figures"] = std::move(fig);
    }

    detail::write_text_file(out / "report.json", report.dump(1) + "\n");
    log << "[train] artifacts in " << out.string() << '\n';
    return TrainRunResult{out, std::move(report)};
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

/// Re-evaluates a checkpoint on fresh samples: dual-objective estimate plus,
/// when the task has closed-form ground truth, the unexplained variance of
/// the learned forward map. Writes eval_report.json next to the other
/// artifacts and returns the report.
inline TrainRunResult run_eval(const RunConfig& cfg, const std::string& checkpoint_path,
                               Eigen::Index n_samples, std::ostream& log) {
    cfg.validate();
    if (n_samples < 2) throw ConfigError("eval: n_samples must be >= 2");
    const TaskSpec task = find_task(cfg.task);
    const Eigen::Index dim = task.alpha.dim();
    auto f = cfg.build_potential(dim);
    auto amort = cfg.build_amortizer(dim);
    const TrainState st = load_checkpoint(checkpoint_path, *f, *amort);

    const Sampler& alpha = cfg.train.swap_direction ? task.beta : task.alpha;
    const Sampler& beta = cfg.train.swap_direction ? task.alpha : task.beta;

    Stream derive(cfg.seed, 51);
    const Batch x = alpha.sample(n_samples, derive.bits(0));
    const Batch y = beta.sample(n_samples, derive.bits(1));
    const Batch x_tilde = amort_predict(*amort, st.phi, y);
    const ConjugateResult conj = conjugate(*f, st.theta, y, x_tilde, cfg.train.conjugate);

    nlohmann::json report;
    report["checkpoint"] = checkpoint_path;
    report["task"] = cfg.task;
    report["step"] = st.step;
    report["n_samples"] = n_samples;
    report["dual_value"] = dual_value(*f, st.theta, x, conj.x_star, y);
    report["mean_conj_iters"] = conj.mean_iters();
    report["fraction_converged"] = conj.fraction_converged();

    if (const auto truth = detail::effective_truth(task, cfg.train.swap_direction)) {
        const MapFn learned = potential_map(f, st.theta);
        const UvpReport rep = l2_uvp(learned, *truth, alpha, beta, n_samples, derive.bits(2));
        report["l2_uvp"] = rep.uvp_percent;
        log << "[eval] step " << st.step << ": dual = " << report["dual_value"].get<double>()
            << ", l2_uvp = " << rep.uvp_percent << "%\n";
    } else {
        log << "[eval] step " << st.step << ": dual = " << report["dual_value"].get<double>()
            << '\n';
    }

    const std::filesystem::path out = resolve_output_dir(cfg.output_dir);
    std::filesystem::create_directories(out);
    detail::write_text_file(out / "eval_report.json", report.dump(1) + "\n");
    return TrainRunResult{out, std::move(report)};
}

// ---------------------------------------------------------------------------
// bench-linesearch
// ---------------------------------------------------------------------------

struct BenchRow {
    std::string method;
    int trial = 0;
    double mean_iters = 0.0;
    double fraction_converged = 0.0;
    double wall_ms = 0.0;
};

struct BenchResult {
    std::filesystem::path csv_path;
    std::vector<BenchRow> rows;
};

/// L-BFGS line-search shoot-out on a random quadratic potential: same batch,
/// same candidate ladder (alpha·(2/3)^m, M=15, c1=1e-4, c2=0.9), stopping at
/// sup-norm gradient <= 0.1. One CSV row per (method, trial).
inline BenchResult run_linesearch_bench(Eigen::Index dim, Eigen::Index batch, int trials,
                                        std::uint64_t seed, double cond,
                                        const std::string& output_dir, std::ostream& log) {
    if (dim < 1) throw ConfigError("bench: dim must be >= 1");
    if (batch < 1) throw ConfigError("bench: batch must be >= 1");
    if (trials < 1) throw ConfigError("bench: trials must be >= 1");
    if (!(cond >= 1.0)) throw ConfigError("bench: cond must be >= 1");

    const std::vector<LineSearchMethod> methods = {
        LineSearchMethod::parallel_armijo, LineSearchMethod::backtracking_armijo,
        LineSearchMethod::backtracking_wolfe, LineSearchMethod::backtracking_strong_wolfe};

    BenchResult result;
    Stream derive(seed, 61);
    const Sampler targets = Sampler::standard_normal(dim);
    for (int t = 0; t < trials; ++t) {
        const Eigen::MatrixXd a =
            random_spd(dim, cond, derive.bits(2 * static_cast<std::uint64_t>(t)));
        QuadraticPotential f(a);
        const ParamVector theta = f.init_params(0);
        const Batch y = targets.sample(batch, derive.bits(2 * static_cast<std::uint64_t>(t) + 1));

        for (const auto m : methods) {
            ConjugateConfig cc;
            cc.method = ConjugateMethod::lbfgs;
            cc.stop = StopRule::grad_norm;
            cc.grad_tol = 0.1;
            cc.max_iter = 100;
            cc.linesearch.method = m;
            cc.linesearch.c1 = 1e-4;
            cc.linesearch.c2 = 0.9;
            cc.linesearch.tau = 1.5;  // effective decay 2/3
            cc.linesearch.num_candidates = 15;

            const auto t0 = std::chrono::steady_clock::now();
            const ConjugateResult res = conjugate(f, theta, y, y, cc);
            const double ms =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                    .count();
            result.rows.push_back(
                {linesearch_name(m), t, res.mean_iters(), res.fraction_converged(), ms});
            log << "[bench] " << linesearch_name(m) << " trial " << t << ": "
                << res.mean_iters() << " iters, " << ms << " ms\n";
        }
    }

    const std::filesystem::path out = resolve_output_dir(output_dir);
    std::filesystem::create_directories(out);
    result.csv_path = out / "linesearch_bench.csv";
    std::ofstream csv(result.csv_path);
    csv << "method,trial,dim,batch,mean_iters,fraction_converged,wall_ms\n"
        << std::setprecision(17);
    for (const auto& r : result.rows)
        csv << r.method << ',' << r.trial << ',' << dim << ',' << batch << ',' << r.mean_iters
            << ',' << r.fraction_converged << ',' << r.wall_ms << '\n';
    return result;
}

// ---------------------------------------------------------------------------
// trace-conjugate
// ---------------------------------------------------------------------------

struct TraceRow {
    std::string solver;
    std::string init;
    int iter = 0;
    double mean_j = 0.0;
    double mean_j_gap = 0.0;
};

struct TraceResult {
    std::filesystem::path csv_path;
    std::filesystem::path svg_path;
    std::vector<TraceRow> rows;
};

/// Conjugate-solver budget curves on a trained checkpoint: for each solver in
/// {lbfgs, adam} and each initialization (amortized prediction vs zeros), the
/// mean objective J after a budget of k iterations, k = 0..max_iter, reported
/// as the gap to the best value any configuration reached. L-BFGS curves are
/// exact iteration prefixes (its trajectory is budget-independent); Adam's lr
/// schedule spans the budget, so its curves are per-budget reruns.
inline TraceResult run_convergence_trace(const RunConfig& cfg, const std::string& checkpoint_path,
                                         int max_iter, Eigen::Index n_queries,
                                         std::ostream& log) {
    cfg.validate();
    if (max_iter < 1) throw ConfigError("trace: max_iter must be >= 1");
    if (n_queries < 1) throw ConfigError("trace: n_queries must be >= 1");
    const TaskSpec task = find_task(cfg.task);
    const Eigen::Index dim = task.alpha.dim();
    auto f = cfg.build_potential(dim);
    auto amort = cfg.build_amortizer(dim);
    const TrainState st = load_checkpoint(checkpoint_path, *f, *amort);

    const Sampler& beta = cfg.train.swap_direction ? task.alpha : task.beta;
    Stream derive(cfg.seed, 62);
    const Batch y = beta.sample(n_queries, derive.bits(0));

    const std::vector<std::pair<std::string, Batch>> inits = {
        {"amortized", amort_predict(*amort, st.phi, y)}, {"zero", Batch::Zero(n_queries, dim)}};
    const std::vector<ConjugateMethod> solvers = {ConjugateMethod::lbfgs, ConjugateMethod::adam};

    TraceResult result;
    for (const auto solver : solvers) {
        for (const auto& [init_name, x0] : inits) {
            result.rows.push_back({conjugate_method_name(solver), init_name, 0,
                                   detail::mean_j(*f, st.theta, x0, y), 0.0});
            for (int k = 1; k <= max_iter; ++k) {
                ConjugateConfig ck = cfg.train.conjugate;
                ck.method = solver;
                ck.max_iter = k;
                // Disable early stopping so a budget of k runs exactly k steps.
                ck.stop = StopRule::change;
                ck.tol = 1e-300;
                const ConjugateResult res = conjugate(*f, st.theta, y, x0, ck);
                result.rows.push_back({conjugate_method_name(solver), init_name, k,
                                       kahan_mean(res.j_values), 0.0});
            }
            log << "[trace] " << conjugate_method_name(solver) << '/' << init_name
                << ": J " << result.rows[result.rows.size() - std::size_t(max_iter) - 1].mean_j
                << " -> " << result.rows.back().mean_j << '\n';
        }
    }

    double j_best = std::numeric_limits<double>::infinity();
    for (const auto& r : result.rows) j_best = std::min(j_best, r.mean_j);
    for (auto& r : result.rows) r.mean_j_gap = r.mean_j - j_best;

    const std::filesystem::path out = resolve_output_dir(cfg.output_dir);
    std::filesystem::create_directories(out);
    result.csv_path = out / "conjugate_trace.csv";
    {
        std::ofstream csv(result.csv_path);
        csv << "solver,init,iter,mean_j,mean_j_gap\n" << std::setprecision(17);
        for (const auto& r : result.rows)
            csv << r.solver << ',' << r.init << ',' << r.iter << ',' << r.mean_j << ','
                << r.mean_j_gap << '\n';
    }

    // Log-gap trace plot, one polyline per (solver, init).
    constexpr double kGapFloor = 1e-12;
    double gap_hi = -300.0;
    for (const auto& r : result.rows)
        gap_hi = std::max(gap_hi, std::log10(std::max(r.mean_j_gap, kGapFloor)));
    SvgCanvas svg(0.0, static_cast<double>(max_iter), std::log10(kGapFloor) - 0.5, gap_hi + 0.5);
    svg.add_frame();
    const std::vector<std::string> colors = {"#2c7bb6", "#abd9e9", "#d7191c", "#fdae61"};
    std::size_t curve = 0;
    for (const auto solver : solvers) {
        for (const auto& [init_name, x0] : inits) {
            std::vector<double> xs, ys;
            for (const auto& r : result.rows) {
                if (r.solver != conjugate_method_name(solver) || r.init != init_name) continue;
                xs.push_back(static_cast<double>(r.iter));
                ys.push_back(std::log10(std::max(r.mean_j_gap, kGapFloor)));
            }
            svg.add_polyline(xs, ys, colors[curve % colors.size()]);
            svg.add_text(0.02 * max_iter, gap_hi - 0.9 * static_cast<double>(curve),
                         conjugate_method_name(solver) + "/" + init_name, 12,
                         colors[curve % colors.size()]);
            ++curve;
        }
    }
    result.svg_path = out / "conjugate_trace.svg";
    svg.write(result.svg_path.string());
    return result;
}

// ---------------------------------------------------------------------------
// export-figures
// ---------------------------------------------------------------------------

struct FigureResult {
    std::filesystem::path dir;
    std::vector<std::string> files;
};

inline FigureResult run_export_figures(const RunConfig& cfg, const std::string& checkpoint_path,
                                       Eigen::Index n_samples, Eigen::Index resolution,
                                       std::ostream& log) {
    cfg.validate();
    if (n_samples < 2) throw ConfigError("figures: n_samples must be >= 2");
    const TaskSpec task = find_task(cfg.task);
    const Eigen::Index dim = task.alpha.dim();
    if (dim != 2) throw ConfigError("figures: task must be 2-D");
    auto f = cfg.build_potential(dim);
    auto amort = cfg.build_amortizer(dim);
    const TrainState st = load_checkpoint(checkpoint_path, *f, *amort);

    const Sampler& alpha = cfg.train.swap_direction ? task.beta : task.alpha;
    const Sampler& beta = cfg.train.swap_direction ? task.alpha : task.beta;
    const std::filesystem::path dir = resolve_output_dir(cfg.output_dir) / "figures";
    FigureResult result;
    result.dir = dir;
    result.files = emit_figure_set(alpha, beta, *f, st.theta, *amort, st.phi, cfg.seed, n_samples,
                                   resolution, dir);
    log << "[figures] wrote " << result.files.size() << " files to " << dir.string() << '\n';
    return result;
}

}  // namespace w2dual
