#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "w2dual/driver.hpp"

namespace {

struct ConfigArgs {
    std::string config_path;
    std::vector<std::string> sets;
};

void add_config_options(CLI::App* sub, ConfigArgs* args) {
    sub->add_option("--config", args->config_path, "key = value config file");
    sub->add_option("--set", args->sets, "override a config key (key=value, repeatable)");
}

/// Resolution order: config file, then subcommand shorthand flags, then --set
/// overrides in the order given.
w2dual::RunConfig build_config(const ConfigArgs& args,
                               const std::vector<w2dual::KvEntry>& sugar) {
    std::vector<w2dual::KvEntry> entries;
    if (!args.config_path.empty()) entries = w2dual::parse_kv_file(args.config_path);
    entries.insert(entries.end(), sugar.begin(), sugar.end());
    for (const auto& s : args.sets) entries.push_back(w2dual::parse_override(s));
    return w2dual::RunConfig::from_entries(entries);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Wasserstein-2 optimal transport maps via amortized dual training"};
    app.require_subcommand(1);

    // --- train ---------------------------------------------------------
    auto* train = app.add_subcommand("train", "train dual potential + amortizer on a task");
    ConfigArgs train_args;
    add_config_options(train, &train_args);
    std::string opt_task, opt_loss, opt_solver, opt_outdir;
    std::int64_t opt_seed = 0, opt_trials = 0, opt_iters = 0, opt_batch = 0;
    train->add_option("--task", opt_task, "task name (see measures registry)");
    train->add_option("--seed", opt_seed, "base seed; trial i uses seed+i");
    train->add_option("--trials", opt_trials, "number of sequential trials");
    train->add_option("--output-dir", opt_outdir, "artifact directory");
    train->add_option("--loss", opt_loss, "amortization loss (objective|cycle|regression)");
    train->add_option("--solver", opt_solver, "conjugate solver (none|lbfgs|adam)");
    train->add_option("--iters", opt_iters, "training steps");
    train->add_option("--batch", opt_batch, "batch size");
    train->callback([&] {
        std::vector<w2dual::KvEntry> sugar;
        auto flag = [&](const char* name, const std::string& key, const std::string& value) {
            if (train->count(name)) sugar.push_back({key, value, std::string("flag ") + name});
        };
        flag("--task", "task", opt_task);
        flag("--seed", "seed", std::to_string(opt_seed));
        flag("--trials", "trials", std::to_string(opt_trials));
        flag("--output-dir", "output_dir", opt_outdir);
        flag("--loss", "amortization.loss", opt_loss);
        flag("--solver", "conjugate.solver", opt_solver);
        flag("--iters", "train.n_iters", std::to_string(opt_iters));
        flag("--batch", "train.batch_size", std::to_string(opt_batch));
        w2dual::run_train(build_config(train_args, sugar), std::cout);
    });

    // --- eval ----------------------------------------------------------
    auto* eval = app.add_subcommand("eval", "re-evaluate a checkpoint on fresh samples");
    ConfigArgs eval_args;
    add_config_options(eval, &eval_args);
    std::string eval_ckpt;
    std::int64_t eval_samples = 0;
    eval->add_option("--checkpoint", eval_ckpt, "checkpoint JSON path")->required();
    eval->add_option("--samples", eval_samples, "evaluation sample count");
    eval->callback([&] {
        const w2dual::RunConfig cfg = build_config(eval_args, {});
        const Eigen::Index n = eval->count("--samples")
                                   ? static_cast<Eigen::Index>(eval_samples)
                                   : cfg.train.final_eval_samples;
        w2dual::run_eval(cfg, eval_ckpt, n, std::cout);
    });

    // --- bench-linesearch ------------------------------------------------
    auto* bench = app.add_subcommand("bench-linesearch",
                                     "compare line searches on a random quadratic potential");
    std::int64_t bench_dim = 8, bench_batch = 1024, bench_trials = 3, bench_seed = 0;
    double bench_cond = 100.0;
    std::string bench_outdir = "w2dual_out";
    bench->add_option("--dim", bench_dim, "problem dimension");
    bench->add_option("--batch", bench_batch, "targets per solve");
    bench->add_option("--trials", bench_trials, "independent (matrix, batch) draws");
    bench->add_option("--seed", bench_seed, "base seed");
    bench->add_option("--cond", bench_cond, "condition number of the quadratic");
    bench->add_option("--output-dir", bench_outdir, "artifact directory");
    bench->callback([&] {
        w2dual::run_linesearch_bench(static_cast<Eigen::Index>(bench_dim),
                                     static_cast<Eigen::Index>(bench_batch),
                                     static_cast<int>(bench_trials),
                                     static_cast<std::uint64_t>(bench_seed), bench_cond,
                                     bench_outdir, std::cout);
    });

    // --- trace-conjugate -------------------------------------------------
    auto* trace = app.add_subcommand("trace-conjugate",
                                     "per-iteration conjugate objective curves on a checkpoint");
    ConfigArgs trace_args;
    add_config_options(trace, &trace_args);
    std::string trace_ckpt;
    std::int64_t trace_iters = 25, trace_queries = 256;
    trace->add_option("--checkpoint", trace_ckpt, "checkpoint JSON path")->required();
    trace->add_option("--iters", trace_iters, "largest iteration budget");
    trace->add_option("--queries", trace_queries, "number of conjugate targets");
    trace->callback([&] {
        w2dual::run_convergence_trace(build_config(trace_args, {}), trace_ckpt,
                                      static_cast<int>(trace_iters),
                                      static_cast<Eigen::Index>(trace_queries), std::cout);
    });

    // --- export-figures --------------------------------------------------
    auto* figures = app.add_subcommand("export-figures",
                                       "pushforward / interpolation / landscape plots");
    ConfigArgs fig_args;
    add_config_options(figures, &fig_args);
    std::string fig_ckpt;
    std::int64_t fig_samples = 512, fig_resolution = 201;
    figures->add_option("--checkpoint", fig_ckpt, "checkpoint JSON path")->required();
    figures->add_option("--samples", fig_samples, "points per scatter set");
    figures->add_option("--resolution", fig_resolution, "landscape grid resolution per axis");
    figures->callback([&] {
        w2dual::run_export_figures(build_config(fig_args, {}), fig_ckpt,
                                   static_cast<Eigen::Index>(fig_samples),
                                   static_cast<Eigen::Index>(fig_resolution), std::cout);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const w2dual::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const w2dual::DimensionError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const w2dual::NumericalError& e) {
        std::cerr << "numerical abort: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
