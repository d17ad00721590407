#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "w2dual/config.hpp"
#include "w2dual/driver.hpp"
#include "w2dual/svg.hpp"

namespace {

namespace fs = std::filesystem;
using namespace w2dual;

fs::path fresh_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / ("w2dual_cli_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string read_file(const fs::path& p) {
    std::ifstream is(p);
    REQUIRE(is.good());
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

std::size_t count_substr(const std::string& hay, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = hay.find(needle); pos != std::string::npos;
         pos = hay.find(needle, pos + needle.size()))
        ++n;
    return n;
}

/// Metrics CSV lines with the trailing wall_ms field stripped — everything
/// that is contractually reproducible across reruns.
std::vector<std::string> csv_rows_no_wall(const fs::path& p) {
    std::ifstream is(p);
    REQUIRE(is.good());
    std::vector<std::string> rows;
    std::string line;
    while (std::getline(is, line)) {
        const auto pos = line.rfind(',');
        REQUIRE(pos != std::string::npos);
        rows.push_back(line.substr(0, pos));
    }
    return rows;
}

std::string smoke_text(const std::string& outdir, int trials = 2) {
    std::ostringstream os;
    os << "# smoke-scale training run\n"
          "task = gauss_scale_2d\n"
          "seed = 7\n"
          "trials = "
       << trials
       << "\n"
          "output_dir = "
       << outdir
       << "\n"
          "potential.kind = icnn\n"
          "potential.hidden = 8,8\n"
          "amortizer.kind = init_nn\n"
          "amortizer.hidden = 8\n"
          "amortization.loss = objective\n"
          "conjugate.solver = lbfgs\n"
          "conjugate.max_iter = 12\n"
          "train.n_iters = 6\n"
          "train.batch_size = 16\n"
          "train.lr_init = 0.001\n"
          "train.eval_every = 3\n"
          "train.eval_samples = 64\n"
          "train.final_eval_samples = 128\n"
          "train.pretrain = false\n";
    return os.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// key = value parsing
// ---------------------------------------------------------------------------

TEST_CASE("kv parser handles comments, blanks, and whitespace", "[config]") {
    const auto entries = parse_kv_text("# header\n"
                                       "\n"
                                       "  task = moons  # trailing comment\n"
                                       "train.n_iters=12\n"
                                       "\t potential.hidden =  32 , 16 \n",
                                       "demo.cfg");
    REQUIRE(entries.size() == 3);
    CHECK(entries[0].key == "task");
    CHECK(entries[0].value == "moons");
    CHECK(entries[0].origin == "demo.cfg:3");
    CHECK(entries[1].key == "train.n_iters");
    CHECK(entries[1].value == "12");
    CHECK(entries[2].origin == "demo.cfg:5");
}

TEST_CASE("kv parser anchors errors to file and line", "[config]") {
    auto message_of = [](const std::string& text) {
        try {
            parse_kv_text(text, "bad.cfg");
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string("<no error>");
    };
    CHECK(message_of("task = moons\nnot a pair\n").find("bad.cfg:2") == 0);
    CHECK(message_of("= moons\n").find("bad.cfg:1") == 0);
    CHECK(message_of("task =   # comment ate the value\n").find("bad.cfg:1") == 0);
    CHECK(message_of("task = moons\nseed = \n").find("bad.cfg:2") == 0);
}

TEST_CASE("override parsing", "[config]") {
    const KvEntry e = parse_override("train.batch_size=64");
    CHECK(e.key == "train.batch_size");
    CHECK(e.value == "64");
    CHECK_THROWS_AS(parse_override("no_equals"), ConfigError);
    CHECK_THROWS_AS(parse_override("=value"), ConfigError);
    CHECK_THROWS_AS(parse_override("key="), ConfigError);
}

TEST_CASE("typed keys resolve into the run config", "[config]") {
    const auto entries = parse_kv_text("task = moons\n"
                                       "seed = 42\n"
                                       "trials = 5\n"
                                       "potential.hidden = 48,24\n"
                                       "potential.actnorm = false\n"
                                       "amortization.loss = cycle\n"
                                       "amortization.connect_potential = true\n"
                                       "conjugate.solver = adam\n"
                                       "conjugate.linesearch = backtracking_wolfe\n"
                                       "conjugate.stop = grad_norm\n"
                                       "conjugate.tau = 2\n"
                                       "conjugate.num_candidates = 20\n"
                                       "train.n_iters = 321\n"
                                       "train.lr_init = 0.00025\n"
                                       "train.swap_direction = true\n"
                                       "pretrain.n_iters = 77\n",
                                       "typed.cfg");
    const RunConfig cfg = RunConfig::from_entries(entries);
    CHECK(cfg.task == "moons");
    CHECK(cfg.seed == 42);
    CHECK(cfg.trials == 5);
    REQUIRE(cfg.potential_hidden.size() == 2);
    CHECK(cfg.potential_hidden[0] == 48);
    CHECK(cfg.potential_hidden[1] == 24);
    CHECK_FALSE(cfg.potential_actnorm);
    CHECK(cfg.train.loss == AmortLoss::cycle);
    CHECK(cfg.train.connect_potential);
    CHECK(cfg.train.conjugate.method == ConjugateMethod::adam);
    CHECK(cfg.train.conjugate.linesearch.method == LineSearchMethod::backtracking_wolfe);
    CHECK(cfg.train.conjugate.stop == StopRule::grad_norm);
    CHECK(cfg.train.conjugate.linesearch.tau == 2.0);
    CHECK(cfg.train.conjugate.linesearch.num_candidates == 20);
    CHECK(cfg.train.n_iters == 321);
    CHECK(cfg.train.lr_init == 0.00025);
    CHECK(cfg.train.swap_direction);
    CHECK(cfg.train.pretrain_cfg.n_iters == 77);
}

TEST_CASE("bad values and unknown keys are rejected with origins", "[config]") {
    auto apply_one = [](const std::string& key, const std::string& value) {
        RunConfig cfg;
        cfg.apply(KvEntry{key, value, "t.cfg:9"});
    };
    CHECK_THROWS_AS(apply_one("train.n_iters", "12.5"), ConfigError);
    CHECK_THROWS_AS(apply_one("train.lr_init", "fast"), ConfigError);
    CHECK_THROWS_AS(apply_one("train.pretrain", "maybe"), ConfigError);
    CHECK_THROWS_AS(apply_one("seed", "-3"), ConfigError);
    CHECK_THROWS_AS(apply_one("potential.hidden", "8,zero"), ConfigError);
    CHECK_THROWS_AS(apply_one("potential.hidden", "8,0"), ConfigError);
    CHECK_THROWS_AS(apply_one("amortization.loss", "fastest"), ConfigError);
    CHECK_THROWS_AS(apply_one("no.such.key", "1"), ConfigError);
    try {
        apply_one("no.such.key", "1");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("t.cfg:9") == 0);
        CHECK(std::string(e.what()).find("no.such.key") != std::string::npos);
    }
}

TEST_CASE("validation rejects inconsistent run configs", "[config]") {
    auto cfg_with = [](const std::string& extra) {
        auto entries = parse_kv_text(extra, "v.cfg");
        return RunConfig::from_entries(entries);
    };
    CHECK_THROWS_AS(cfg_with("task = not_a_task\n").validate(), ConfigError);
    CHECK_THROWS_AS(cfg_with("trials = 0\n").validate(), ConfigError);
    CHECK_THROWS_AS(cfg_with("potential.kind = spline\n").validate(), ConfigError);
    CHECK_THROWS_AS(cfg_with("potential.act = softplus\n").validate(), ConfigError);
    CHECK_THROWS_AS(
        cfg_with("amortization.loss = regression\nconjugate.solver = none\n").validate(),
        ConfigError);
    CHECK_NOTHROW(cfg_with("amortization.loss = regression\nconjugate.solver = lbfgs\n")
                      .validate());
}

TEST_CASE("effective config text round-trips exactly", "[config]") {
    RunConfig cfg;
    cfg.task = "moons";
    cfg.seed = 9001;
    cfg.trials = 4;
    cfg.output_dir = "some/dir";
    cfg.potential_hidden = {48, 24, 12};
    cfg.potential_actnorm = false;
    cfg.amortizer_kind = "grad_icnn";
    cfg.train.loss = AmortLoss::cycle;
    cfg.train.connect_potential = true;
    cfg.train.conjugate.method = ConjugateMethod::adam;
    cfg.train.conjugate.tol = 1.0 / 3.0;  // not representable in short decimal
    cfg.train.conjugate.linesearch.alpha_init = 0.1;
    cfg.train.lr_init = 1e-7;
    cfg.train.n_iters = 123456;
    cfg.train.swap_direction = true;

    const std::string text = cfg.to_text();
    const RunConfig back = RunConfig::from_entries(parse_kv_text(text, "eff.cfg"));
    REQUIRE(back.to_text() == text);
    CHECK(back.train.conjugate.tol == cfg.train.conjugate.tol);
    CHECK(back.train.lr_init == cfg.train.lr_init);
    CHECK(back.amortizer_kind == "grad_icnn");
}

TEST_CASE("output root environment override", "[config]") {
    CHECK(resolve_output_dir("/abs/path") == fs::path("/abs/path"));
    REQUIRE(::setenv("W2DUAL_OUTPUT_ROOT", "/tmp/w2dual_root_test", 1) == 0);
    CHECK(resolve_output_dir("rel/dir") == fs::path("/tmp/w2dual_root_test/rel/dir"));
    CHECK(resolve_output_dir("/abs/path") == fs::path("/abs/path"));
    REQUIRE(::unsetenv("W2DUAL_OUTPUT_ROOT") == 0);
    CHECK(resolve_output_dir("rel/dir") == fs::path("rel/dir"));
}

// ---------------------------------------------------------------------------
// Driver pipeline (train -> round trip -> eval -> trace -> figures)
// ---------------------------------------------------------------------------

TEST_CASE("driver pipeline produces consistent artifacts", "[config]") {
    const fs::path out = fresh_dir("pipeline");
    const RunConfig cfg =
        RunConfig::from_entries(parse_kv_text(smoke_text(out.string()), "smoke.cfg"));

    std::ostringstream log;
    const TrainRunResult run = run_train(cfg, log);

    // --- artifact inventory -------------------------------------------
    REQUIRE(fs::exists(out / "config_effective.txt"));
    REQUIRE(fs::exists(out / "report.json"));
    for (int i = 0; i < 2; ++i) {
        const fs::path trial = out / ("trial" + std::to_string(i));
        REQUIRE(fs::exists(trial / "metrics.csv"));
        REQUIRE(fs::exists(trial / "checkpoint_final.json"));
    }
    REQUIRE(fs::exists(out / "figures" / "pushforward.svg"));
    REQUIRE(fs::exists(out / "figures" / "interpolation.csv"));
    REQUIRE(fs::exists(out / "figures" / "landscape_0.svg"));
    REQUIRE(fs::exists(out / "figures" / "landscape_1.csv"));

    // --- report contents -------------------------------------------------
    const nlohmann::json& rep = run.report;
    CHECK(rep.at("task") == "gauss_scale_2d");
    CHECK(rep.at("trials") == 2);
    CHECK(rep.at("solver") == "lbfgs");
    REQUIRE(rep.contains("l2_uvp_final"));  // Gaussian pair has ground truth
    REQUIRE(rep.at("l2_uvp_final").at("values").size() == 2);
    CHECK(rep.at("l2_uvp_final").at("mean").get<double>() >= 0.0);
    REQUIRE(rep.at("trial_results").size() == 2);
    const auto& tr0 = rep.at("trial_results").at(0);
    CHECK(tr0.at("seed") == 7);
    CHECK(tr0.at("dual_value_trace").size() == 3);  // steps 0, 3, and final 5

    // metrics rows carry uvp exactly at the eval cadence
    const std::string metrics0 = read_file(out / "trial0" / "metrics.csv");
    REQUIRE(metrics0.rfind("step,dual_value,mean_conj_iters,mean_conj_grad_norm,amort_loss,"
                           "l2_uvp,wall_ms\n",
                           0) == 0);
    REQUIRE(count_substr(metrics0, "\n") == 7);  // header + 6 steps

    // --- effective-config round trip reproduces the logs ----------------
    const std::string eff = read_file(out / "config_effective.txt");
    RunConfig replay = RunConfig::from_entries(parse_kv_text(eff, "eff.cfg"));
    REQUIRE(replay.to_text() == cfg.to_text());
    const fs::path out2 = fresh_dir("pipeline_replay");
    replay.output_dir = out2.string();
    run_train(replay, log);
    for (int i = 0; i < 2; ++i) {
        const auto a = csv_rows_no_wall(out / ("trial" + std::to_string(i)) / "metrics.csv");
        const auto b = csv_rows_no_wall(out2 / ("trial" + std::to_string(i)) / "metrics.csv");
        REQUIRE(a == b);
    }
    REQUIRE(read_file(out / "trial0" / "checkpoint_final.json") ==
            read_file(out2 / "trial0" / "checkpoint_final.json"));

    // --- eval on the final checkpoint ------------------------------------
    const std::string ckpt = (out / "trial0" / "checkpoint_final.json").string();
    const TrainRunResult ev1 = run_eval(cfg, ckpt, 256, log);
    REQUIRE(fs::exists(out / "eval_report.json"));
    CHECK(ev1.report.at("step") == 6);
    CHECK(std::isfinite(ev1.report.at("dual_value").get<double>()));
    REQUIRE(ev1.report.contains("l2_uvp"));
    CHECK(ev1.report.at("l2_uvp").get<double>() >= 0.0);
    const TrainRunResult ev2 = run_eval(cfg, ckpt, 256, log);
    CHECK(ev1.report.dump() == ev2.report.dump());  // wall time never enters reports

    // --- conjugate budget curves -----------------------------------------
    const int k_max = 6;
    const TraceResult trace = run_convergence_trace(cfg, ckpt, k_max, 32, log);
    REQUIRE(fs::exists(trace.csv_path));
    REQUIRE(fs::exists(trace.svg_path));
    REQUIRE(trace.rows.size() == 4u * (k_max + 1));  // {lbfgs,adam} x {amortized,zero}
    double min_gap = 1e300;
    for (const auto& r : trace.rows) {
        CHECK(r.mean_j_gap >= 0.0);
        min_gap = std::min(min_gap, r.mean_j_gap);
        CHECK(r.iter <= k_max);
    }
    CHECK(min_gap == 0.0);
    // L-BFGS curves are exact prefixes, so J never increases with the budget.
    for (const std::string init : {"amortized", "zero"}) {
        double prev = 1e300;
        for (const auto& r : trace.rows) {
            if (r.solver != "lbfgs" || r.init != init) continue;
            CHECK(r.mean_j <= prev + 1e-12);
            prev = r.mean_j;
        }
    }
    CHECK(count_substr(read_file(trace.svg_path), "<polyline") == 4);

    // --- figure export -----------------------------------------------------
    const fs::path figdir = fresh_dir("pipeline_figs");
    RunConfig figcfg = cfg;
    figcfg.output_dir = figdir.string();
    const FigureResult figs = run_export_figures(figcfg, ckpt, 64, 121, log);
    REQUIRE(figs.files.size() == 8);
    for (const auto& name : figs.files) REQUIRE(fs::exists(figs.dir / name));

    const std::string push_svg = read_file(figs.dir / "pushforward.svg");
    CHECK(count_substr(push_svg, "<circle") == 3 * 64);
    CHECK(push_svg.rfind("</svg>\n") == push_svg.size() - 7);

    const std::string interp_csv = read_file(figs.dir / "interpolation.csv");
    CHECK(count_substr(interp_csv, "frame0,0,") == 64);
    CHECK(count_substr(interp_csv, "frame4,1,") == 64);

    // landscape SVG rect count = unmasked cells + background + frame
    const std::string land_csv = read_file(figs.dir / "landscape_0.csv");
    std::size_t unmasked = 0;
    {
        std::istringstream is(land_csv);
        std::string line;
        std::getline(is, line);  // header
        while (std::getline(is, line))
            if (line.size() >= 2 && line.compare(line.size() - 2, 2, ",0") == 0) ++unmasked;
    }
    const std::string land_svg = read_file(figs.dir / "landscape_0.svg");
    REQUIRE(count_substr(land_svg, "<rect") == unmasked + 2);
}

TEST_CASE("tasks without ground truth omit uvp from the report", "[config]") {
    const fs::path out = fresh_dir("moons");
    auto entries = parse_kv_text(smoke_text(out.string(), 1), "smoke.cfg");
    RunConfig cfg = RunConfig::from_entries(entries);
    cfg.task = "moons";
    cfg.train.n_iters = 4;
    std::ostringstream log;
    const TrainRunResult run = run_train(cfg, log);
    CHECK_FALSE(run.report.contains("l2_uvp_final"));
    REQUIRE(run.report.at("trial_results").at(0).contains("dual_value_trace"));
    CHECK_FALSE(run.report.at("trial_results").at(0).contains("l2_uvp_final"));
}

// ---------------------------------------------------------------------------
// Line-search benchmark
// ---------------------------------------------------------------------------

TEST_CASE("line-search benchmark rows are complete and grid-consistent", "[config]") {
    const fs::path out = fresh_dir("bench");
    std::ostringstream log;
    const BenchResult res = run_linesearch_bench(4, 64, 2, 3, 50.0, out.string(), log);
    REQUIRE(res.rows.size() == 8);  // 4 methods x 2 trials
    REQUIRE(fs::exists(res.csv_path));
    const std::string csv = read_file(res.csv_path);
    REQUIRE(csv.rfind("method,trial,dim,batch,mean_iters,fraction_converged,wall_ms\n", 0) == 0);
    REQUIRE(count_substr(csv, "\n") == 9);

    for (int trial = 0; trial < 2; ++trial) {
        double pa = -1.0, ba = -2.0;
        for (const auto& r : res.rows) {
            if (r.trial != trial) continue;
            CHECK(r.mean_iters >= 1.0);
            CHECK(r.fraction_converged == 1.0);
            if (r.method == "parallel_armijo") pa = r.mean_iters;
            if (r.method == "backtracking_armijo") ba = r.mean_iters;
        }
        // Identical candidate ladders accept identical steps, so the two
        // Armijo variants follow the same trajectory.
        CHECK(pa == ba);
    }
}

// ---------------------------------------------------------------------------
// CLI binary (exit codes per the operator contract)
// ---------------------------------------------------------------------------

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = "./w2dual " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    REQUIRE(rc != -1);
    REQUIRE(WIFEXITED(rc));
    return WEXITSTATUS(rc);
}

}  // namespace

TEST_CASE("cli exit codes distinguish config from numerical failures", "[config]") {
    if (!fs::exists("./w2dual")) {
        WARN("w2dual binary not in working directory; skipping subprocess checks");
        return;
    }
    const fs::path out = fresh_dir("cli");
    const std::string tiny = " --trials 1 --iters 3 --batch 8"
                             " --set potential.hidden=4 --set amortizer.hidden=4"
                             " --set train.pretrain=false --set train.eval_samples=32"
                             " --set train.final_eval_samples=32 --set conjugate.max_iter=8";

    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("train --help") == 0);
    CHECK(run_cli("train --task gauss_scale_2d" + tiny + " --output-dir " +
                  (out / "ok").string()) == 0);
    CHECK(fs::exists(out / "ok" / "report.json"));

    CHECK(run_cli("definitely-not-a-subcommand") == 2);
    CHECK(run_cli("train --no-such-flag") == 2);
    CHECK(run_cli("train --task not_a_task" + tiny) == 2);
    CHECK(run_cli("train --task gauss_scale_2d --loss regression --solver none" + tiny) == 2);
    CHECK(run_cli("train --set malformed_override" + tiny) == 2);
    CHECK(run_cli("train --set no.such.key=1" + tiny) == 2);
    CHECK(run_cli("eval --checkpoint /no/such/file.json") == 2);

    // Parameter overflow mid-run is a numerical abort, not a config error.
    CHECK(run_cli("train --task gauss_scale_2d" + tiny + " --set train.lr_init=1e155" +
                  " --output-dir " + (out / "crash").string()) == 3);
    CHECK(fs::exists(out / "crash" / "trial0" / "crash_checkpoint.json"));
}

// ---------------------------------------------------------------------------
// SVG canvas
// ---------------------------------------------------------------------------

TEST_CASE("canvas maps data coordinates onto pixels", "[svg]") {
    SvgCanvas svg(-2.0, 2.0, -1.0, 3.0, 400, 200, 50);
    CHECK(svg.px(-2.0) == 50.0);
    CHECK(svg.px(2.0) == 350.0);
    CHECK(svg.px(0.0) == 200.0);
    CHECK(svg.py(3.0) == 50.0);   // data top -> pixel top
    CHECK(svg.py(-1.0) == 150.0); // data bottom -> pixel bottom
    CHECK_THROWS_AS(SvgCanvas(1.0, 1.0, 0.0, 1.0), ConfigError);
    CHECK_THROWS_AS(SvgCanvas(0.0, 1.0, 0.0, 1.0, 40, 40, 30), ConfigError);
}

TEST_CASE("scatter skips non-finite rows and checks shape", "[svg]") {
    SvgCanvas svg(-1.0, 1.0, -1.0, 1.0);
    Batch pts(3, 2);
    pts << 0.0, 0.0, std::numeric_limits<double>::quiet_NaN(), 0.5, 0.25, -0.25;
    svg.add_points(pts, 2.0, "#123456");
    const std::string s = svg.str();
    CHECK(count_substr(s, "<circle") == 2);
    CHECK(s.find("#123456") != std::string::npos);
    CHECK(s.rfind("</svg>\n") == s.size() - 7);
    Batch bad(2, 3);
    bad.setZero();
    CHECK_THROWS_AS(svg.add_points(bad, 2.0, "#000000"), DimensionError);
}

TEST_CASE("heatmap draws exactly the unmasked cells", "[svg]") {
    Eigen::MatrixXd values(3, 3);
    values << 0, 1, 2, 3, 4, 5, 6, 7, 8;
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> mask(3, 3);
    mask.setZero();
    mask(0, 0) = 1;
    mask(2, 2) = 1;
    SvgCanvas svg(-1.2, 1.2, -1.2, 1.2);
    svg.add_heatmap(values, mask, -1.0, 1.0);
    CHECK(count_substr(svg.str(), "<rect") == 1 + 7);  // background + unmasked cells

    SvgCanvas all_masked(-1.2, 1.2, -1.2, 1.2);
    mask.setOnes();
    all_masked.add_heatmap(values, mask, -1.0, 1.0);
    CHECK(count_substr(all_masked.str(), "<rect") == 1);  // background only

    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> wrong(2, 3);
    wrong.setZero();
    CHECK_THROWS_AS(svg.add_heatmap(values, wrong, -1.0, 1.0), DimensionError);
}

TEST_CASE("polyline, markers, and text render structurally", "[svg]") {
    SvgCanvas svg(0.0, 10.0, 0.0, 10.0, 100, 100, 0);
    CHECK_THROWS_AS(SvgCanvas(0.0, 1.0, 0.0, 1.0).add_polyline({0.0}, {}, "#000000"),
                    DimensionError);
    svg.add_polyline({0.0, 5.0, 10.0}, {0.0, 10.0, 0.0}, "#ff0000", 2.0);
    svg.add_marker(5.0, 5.0, "#00ff00");
    svg.add_text(1.0, 9.0, "legend");
    const std::string s = svg.str();
    CHECK(count_substr(s, "<polyline") == 1);
    CHECK(s.find("points=\"0,100 50,0 100,100 \"") != std::string::npos);
    CHECK(count_substr(s, "<line") == 2);  // one marker = two strokes
    CHECK(s.find(">legend</text>") != std::string::npos);
}

TEST_CASE("color interpolation endpoints and midpoints", "[svg]") {
    CHECK(detail::color_lerp("#000000", "#ffffff", 0.0) == "#000000");
    CHECK(detail::color_lerp("#000000", "#ffffff", 1.0) == "#ffffff");
    CHECK(detail::color_lerp("#000000", "#ffffff", 0.5) == "#808080");
    CHECK(detail::color_lerp("#204060", "#204060", 0.3) == "#204060");
    CHECK(detail::heat_color(0.0) == "#2c7bb6");
    CHECK(detail::heat_color(0.5) == "#ffffbf");
    CHECK(detail::heat_color(1.0) == "#d7191c");
    CHECK(detail::heat_color(-3.0) == "#2c7bb6");  // clamped
}
