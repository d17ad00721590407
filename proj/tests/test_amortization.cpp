#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>

#include "test_helpers.hpp"
#include "w2dual/amortization.hpp"
#include "w2dual/measures.hpp"
#include "w2dual/potentials.hpp"
#include "w2dual/rng.hpp"

namespace {

using namespace w2dual;
using w2dual::testing::central_diff;
using w2dual::testing::QuadPotential;
using w2dual::testing::rel_err;

/// x̃(y) = ∇(½yᵀMy) = My: exact closed-form amortizer for quadratic tests.
std::shared_ptr<AmortModel> linear_amortizer(const Eigen::MatrixXd& m) {
    return std::make_shared<GradAmortizer>(std::make_shared<QuadPotential>(m));
}

}  // namespace

TEST_CASE("objective loss hand values and exact-conjugate minimum", "[amortization]") {
    QuadPotential f(Eigen::MatrixXd::Identity(2, 2));
    ParamVector theta = f.init_params(0);
    auto identity = linear_amortizer(Eigen::MatrixXd::Identity(2, 2));
    ParamVector phi = identity->init_params(0);

    Batch y(2, 2);
    y << 1.0, 0.0, 0.0, 2.0;
    // x̃(y) = y with f = ½‖x‖²: mean(½‖y‖² - ‖y‖²) = -½ mean ‖y‖².
    REQUIRE(loss_objective(f, theta, *identity, phi, y) ==
            Catch::Approx(-1.25).margin(1e-14));

    AmortEval ev = amort_loss_grad(AmortLoss::objective, f, theta, *identity, phi, y);
    REQUIRE(ev.loss == Catch::Approx(-1.25).margin(1e-14));
    REQUIRE(ev.prediction == y);

    // Exact conjugates minimize the loss to -mean f*(y) for anisotropic f too:
    // f = ½xᵀAx has f*(y) = ½yᵀA⁻¹y and x̆(y) = A⁻¹y.
    Eigen::MatrixXd a = random_spd(2, 8.0, 501);
    Eigen::MatrixXd a_inv = a.inverse();
    QuadPotential fa(a);
    auto exact = linear_amortizer(a_inv);
    Batch yr = normal_batch(Stream(52), 64, 2);
    double fstar_mean = 0.0;
    for (Eigen::Index i = 0; i < yr.rows(); ++i)
        fstar_mean += 0.5 * yr.row(i).dot(a_inv * yr.row(i).transpose());
    fstar_mean /= static_cast<double>(yr.rows());
    REQUIRE(loss_objective(fa, theta, *exact, phi, yr) ==
            Catch::Approx(-fstar_mean).margin(1e-10));

    // Any other prediction does worse (here: the identity map).
    REQUIRE(loss_objective(fa, theta, *identity, phi, yr) > -fstar_mean);
}

TEST_CASE("cycle loss hand values and stationarity bound", "[amortization]") {
    QuadPotential f(Eigen::MatrixXd::Identity(2, 2));
    ParamVector theta = f.init_params(0);
    ParamVector phi = ParamVector(std::make_shared<ParamLayout>());

    auto identity = linear_amortizer(Eigen::MatrixXd::Identity(2, 2));
    Batch y(2, 2);
    y << 1.0, 0.5, -2.0, 3.0;
    REQUIRE(loss_cycle(f, theta, *identity, phi, y) <= 1e-28);

    auto zero = linear_amortizer(Eigen::MatrixXd::Zero(2, 2));
    Batch y34(1, 2);
    y34 << 3.0, 4.0;
    REQUIRE(loss_cycle(f, theta, *zero, phi, y34) == 25.0);

    // loss·B bounds every row's squared stationarity residual.
    auto mlp = make_potential("mlp", 2, {5, 5}, ActFn::parse("elu"));
    ParamVector tm = mlp->init_params(3);
    auto amort = make_amortizer("init_nn", 2, {6}, ActFn::parse("elu"));
    ParamVector pa = amort->init_params(4);
    Batch yb = normal_batch(Stream(61), 16, 2);
    const double loss = loss_cycle(*mlp, tm, *amort, pa, yb);
    Batch pred = amort_predict(*amort, pa, yb);
    Batch grads = grad_input(*mlp, tm, pred);
    for (Eigen::Index i = 0; i < yb.rows(); ++i) {
        const double resid = (grads.row(i) - yb.row(i)).norm();
        REQUIRE(resid <= std::sqrt(loss * static_cast<double>(yb.rows())) + 1e-12);
    }
}

TEST_CASE("regression loss hand values and permutation symmetry", "[amortization]") {
    QuadPotential f(Eigen::MatrixXd::Identity(2, 2));
    ParamVector theta = f.init_params(0);
    ParamVector phi = ParamVector(std::make_shared<ParamLayout>());
    auto zero = linear_amortizer(Eigen::MatrixXd::Zero(2, 2));

    Batch y(1, 2);
    y << 0.3, -0.7;
    Batch x_star(1, 2);
    x_star << 1.0, 1.0;
    REQUIRE(loss_regression(*zero, phi, y, x_star) == 2.0);

    AmortEval ev =
        amort_loss_grad(AmortLoss::regression, f, theta, *zero, phi, y, &x_star);
    REQUIRE(ev.loss == 2.0);

    // Permuting rows and targets together leaves the mean unchanged.
    auto amort = make_amortizer("init_nn", 2, {6}, ActFn::parse("elu"));
    ParamVector pa = amort->init_params(9);
    Batch yb = normal_batch(Stream(71), 5, 2);
    Batch xs = normal_batch(Stream(72), 5, 2);
    Batch yp(5, 2), xp(5, 2);
    const int perm[5] = {3, 0, 4, 2, 1};
    for (int i = 0; i < 5; ++i) {
        yp.row(i) = yb.row(perm[i]);
        xp.row(i) = xs.row(perm[i]);
    }
    REQUIRE(loss_regression(*amort, pa, yb, xs) ==
            Catch::Approx(loss_regression(*amort, pa, yp, xp)).margin(1e-12));
}

TEST_CASE("no gradient reaches the potential unless coupling is requested", "[amortization]") {
    auto f = make_potential("mlp", 2, {4, 3}, ActFn::parse("elu"));
    ParamVector theta = f->init_params(11);
    auto amort = make_amortizer("init_nn", 2, {5}, ActFn::parse("elu"));
    ParamVector phi = amort->init_params(12);
    Batch y = normal_batch(Stream(81), 8, 2);
    Batch x_star = normal_batch(Stream(82), 8, 2);

    for (auto kind : {AmortLoss::objective, AmortLoss::cycle}) {
        AmortEval ev = amort_loss_grad(kind, *f, theta, *amort, phi, y);
        INFO(amort_loss_name(kind));
        REQUIRE(ev.theta_grad.values().isZero(0.0));
        // ...even though the loss genuinely depends on θ.
        const double base = ev.loss;
        ParamVector bumped = theta;
        bumped.values()(0) += 1e-3;
        AmortEval moved = amort_loss_grad(kind, *f, bumped, *amort, phi, y);
        REQUIRE(moved.loss != base);
    }

    // Regression never touches the potential at all.
    AmortEval reg =
        amort_loss_grad(AmortLoss::regression, *f, theta, *amort, phi, y, &x_star);
    ParamVector bumped = theta;
    bumped.values().array() += 0.5;
    AmortEval reg2 =
        amort_loss_grad(AmortLoss::regression, *f, bumped, *amort, phi, y, &x_star);
    REQUIRE(reg.loss == reg2.loss);
    REQUIRE(reg.theta_grad.values().isZero(0.0));

    // The coupled cycle variant exposes a θ-gradient that matches finite
    // differences of the loss value.
    AmortEval coupled = amort_loss_grad(AmortLoss::cycle, *f, theta, *amort, phi, y,
                                        nullptr, /*connect_potential=*/true);
    REQUIRE(coupled.theta_grad.values().cwiseAbs().maxCoeff() > 0.0);
    Stream pick(83);
    ParamVector work = theta;
    for (int t = 0; t < 20; ++t) {
        const auto k = static_cast<Eigen::Index>(
            pick.below(static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(work.size())));
        auto eval = [&] { return loss_cycle(*f, work, *amort, phi, y); };
        const double fd = central_diff(eval, work.values()(k), 1e-5);
        REQUIRE(rel_err(coupled.theta_grad.values()(k), fd) <= 1e-4);
    }
}

TEST_CASE("maximin equivalence: dual phi-gradient is the objective-loss gradient",
          "[amortization]") {
    auto f = make_potential("mlp", 2, {4, 4}, ActFn::parse("elu"));
    ParamVector theta = f->init_params(21);
    auto amort = make_amortizer("init_nn", 2, {6}, ActFn::parse("elu"));
    ParamVector phi = amort->init_params(22);
    Batch y = normal_batch(Stream(91), 16, 2);
    Batch x_alpha = normal_batch(Stream(92), 16, 2);

    AmortEval ev = amort_loss_grad(AmortLoss::objective, *f, theta, *amort, phi, y);

    // Inner objective of the maximin formulation: the full dual estimate with
    // x̃_φ(y) substituted for the conjugate. Its φ-dependence is exactly the
    // objective loss, so finite differences of it must reproduce ev.phi_grad.
    ParamVector work = phi;
    auto dual_with_pred = [&] {
        Vector fx;
        f->value(theta, x_alpha, fx);
        return -kahan_mean(fx) + loss_objective(*f, theta, *amort, work, y);
    };
    Stream pick(93);
    for (int t = 0; t < 30; ++t) {
        const auto k = static_cast<Eigen::Index>(
            pick.below(static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(work.size())));
        const double fd = central_diff(dual_with_pred, work.values()(k), 1e-5);
        REQUIRE(rel_err(ev.phi_grad.values()(k), fd) <= 1e-4);
    }
}

TEST_CASE("cycle and regression phi-gradients match finite differences", "[amortization]") {
    auto f = make_potential("icnn", 2, {6, 6}, ActFn::parse("elu"));
    ParamVector theta = f->init_params(31);
    auto amort = make_amortizer("init_nn", 2, {5, 5}, ActFn::parse("elu"));
    ParamVector phi = amort->init_params(32);
    Batch y = normal_batch(Stream(94), 12, 2);
    Batch x_star = 0.8 * y;

    AmortEval cyc = amort_loss_grad(AmortLoss::cycle, *f, theta, *amort, phi, y);
    AmortEval reg = amort_loss_grad(AmortLoss::regression, *f, theta, *amort, phi, y, &x_star);

    ParamVector work = phi;
    Stream pick(95);
    for (int t = 0; t < 25; ++t) {
        const auto k = static_cast<Eigen::Index>(
            pick.below(static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(work.size())));
        auto eval_cycle = [&] { return loss_cycle(*f, theta, *amort, work, y); };
        const double fd_c = central_diff(eval_cycle, work.values()(k), 1e-5);
        REQUIRE(rel_err(cyc.phi_grad.values()(k), fd_c) <= 1e-4);

        auto eval_reg = [&] { return loss_regression(*amort, work, y, x_star); };
        const double fd_r = central_diff(eval_reg, work.values()(k), 1e-5);
        REQUIRE(rel_err(reg.phi_grad.values()(k), fd_r) <= 1e-4);
    }
}

TEST_CASE("cycle zero and objective minimum identify the same prediction map",
          "[amortization]") {
    // On f = ½xᵀAx both criteria have the closed-form solution x̃(y) = A⁻¹y.
    Eigen::MatrixXd a = random_spd(2, 6.0, 601);
    Eigen::MatrixXd a_inv = a.inverse();
    QuadPotential f(a);
    ParamVector theta = f.init_params(0);
    ParamVector phi = ParamVector(std::make_shared<ParamLayout>());
    Batch y = normal_batch(Stream(96), 32, 2);

    auto exact = linear_amortizer(a_inv);
    const double cycle_at_exact = loss_cycle(f, theta, *exact, phi, y);
    REQUIRE(cycle_at_exact <= 1e-24);

    double fstar_mean = 0.0;
    for (Eigen::Index i = 0; i < y.rows(); ++i)
        fstar_mean += 0.5 * y.row(i).dot(a_inv * y.row(i).transpose());
    fstar_mean /= static_cast<double>(y.rows());
    const double obj_at_exact = loss_objective(f, theta, *exact, phi, y);
    REQUIRE(obj_at_exact == Catch::Approx(-fstar_mean).margin(1e-12));

    // Perturbed maps are strictly worse under both criteria.
    for (int t = 0; t < 5; ++t) {
        Eigen::MatrixXd m = a_inv;
        m(0, 0) += 0.05 * (t + 1);
        m(1, 0) -= 0.02 * (t + 1);
        auto other = linear_amortizer(m);
        REQUIRE(loss_cycle(f, theta, *other, phi, y) > cycle_at_exact);
        REQUIRE(loss_objective(f, theta, *other, phi, y) > obj_at_exact);
    }
}

TEST_CASE("amortization validation and parsing", "[amortization]") {
    REQUIRE(parse_amort_loss("objective") == AmortLoss::objective);
    REQUIRE(parse_amort_loss("cycle") == AmortLoss::cycle);
    REQUIRE(parse_amort_loss("regression") == AmortLoss::regression);
    REQUIRE_THROWS_AS(parse_amort_loss("hinge"), ConfigError);
    REQUIRE(amort_loss_name(AmortLoss::cycle) == "cycle");

    auto f = make_potential("mlp", 2, {3}, ActFn::parse("elu"));
    ParamVector theta = f->init_params(1);
    auto amort = make_amortizer("init_nn", 2, {3}, ActFn::parse("elu"));
    ParamVector phi = amort->init_params(2);
    Batch y = normal_batch(Stream(97), 4, 2);

    REQUIRE_THROWS_AS(
        amort_loss_grad(AmortLoss::regression, *f, theta, *amort, phi, y, nullptr),
        ConfigError);

    Batch wrong = normal_batch(Stream(98), 3, 2);
    REQUIRE_THROWS_AS(
        amort_loss_grad(AmortLoss::regression, *f, theta, *amort, phi, y, &wrong),
        DimensionError);

    Batch empty(0, 2);
    REQUIRE_THROWS_AS(amort_loss_grad(AmortLoss::objective, *f, theta, *amort, phi, empty),
                      ConfigError);

    Batch bad_dim = normal_batch(Stream(99), 4, 3);
    REQUIRE_THROWS_AS(amort_loss_grad(AmortLoss::objective, *f, theta, *amort, phi, bad_dim),
                      DimensionError);
}
