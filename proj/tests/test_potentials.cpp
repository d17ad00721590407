#include "w2dual/potentials.hpp"

#include "test_helpers.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>

using namespace w2dual;
using w2dual::testing::central_diff;
using w2dual::testing::rel_err;

namespace {

Batch random_batch(std::uint64_t seed, Eigen::Index n, Eigen::Index d) {
    Stream g(seed, 99);
    return normal_batch(g, n, d);
}

void perturb(ParamVector& p, std::uint64_t seed, double scale) {
    Stream g(seed, 55);
    Cursor cur(g, 0);
    for (Eigen::Index i = 0; i < p.size(); ++i) p.values()[i] += scale * cur.normal();
}

}  // namespace

TEST_CASE("zero-parameter potentials reduce to the quadratic", "[potentials]") {
    Batch x(2, 2);
    x << 1, 1, 3, 4;

    IcnnPotential icnn(2, {4, 3}, ActFn{Act::elu, 0.2});
    ParamVector p(icnn.layout());  // all zeros, log_alpha = 0
    Vector f = value_of(icnn, p, x);
    REQUIRE(f(0) == Catch::Approx(1.0).epsilon(1e-14));
    REQUIRE(f(1) == Catch::Approx(12.5).epsilon(1e-14));

    MlpPotential mlp(2, {4, 3}, ActFn{Act::elu, 0.2});
    ParamVector pm(mlp.layout());
    Vector fm = value_of(mlp, pm, x);
    REQUIRE(fm(0) == Catch::Approx(1.0).epsilon(1e-14));

    MlpPotential mlp_lrelu(2, {4}, ActFn{Act::leaky_relu, 0.2});
    ParamVector pl(mlp_lrelu.layout());
    REQUIRE(value_of(mlp_lrelu, pl, x)(1) == Catch::Approx(12.5).epsilon(1e-14));

    // gradients reduce to x itself
    Batch g = grad_input(icnn, p, x);
    REQUIRE(g(1, 0) == Catch::Approx(3.0).epsilon(1e-14));
    REQUIRE(g(1, 1) == Catch::Approx(4.0).epsilon(1e-14));
}

TEST_CASE("raising log_alpha by log 2 adds the half square norm", "[potentials]") {
    Batch x = random_batch(1, 5, 3);
    MlpPotential mlp(3, {4}, ActFn{Act::elu, 0.2});
    ParamVector p = mlp.init_params(3);
    Vector f1 = value_of(mlp, p, x);
    p.named("log_alpha")(0, 0) += std::log(2.0);
    Vector f2 = value_of(mlp, p, x);
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        REQUIRE(f2(i) - f1(i) ==
                Catch::Approx(0.5 * x.row(i).squaredNorm()).epsilon(1e-12));
}

TEST_CASE("potential gradients match finite differences", "[potentials]") {
    for (std::uint64_t trial = 0; trial < 12; ++trial) {
        std::shared_ptr<PotentialModel> model;
        if (trial % 3 == 0)
            model = std::make_shared<IcnnPotential>(2, std::vector<Eigen::Index>{5, 4},
                                                    ActFn{Act::elu, 0.2});
        else if (trial % 3 == 1)
            model = std::make_shared<MlpPotential>(2, std::vector<Eigen::Index>{5, 4},
                                                   ActFn{Act::elu, 0.2});
        else
            model = std::make_shared<MlpPotential>(2, std::vector<Eigen::Index>{6},
                                                   ActFn{Act::leaky_relu, 0.2});
        ParamVector p = model->init_params(trial);
        perturb(p, trial + 40, 0.05);
        Batch x = random_batch(trial + 7, 3, 2);

        // input gradient
        Batch g = grad_input(*model, p, x);
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            for (Eigen::Index j = 0; j < x.cols(); ++j) {
                double fd = central_diff([&] { return value_of(*model, p, x)(i); }, x(i, j));
                REQUIRE(rel_err(g(i, j), fd) <= 1e-3);
            }

        // weighted parameter gradient
        Vector w(3);
        w << 1.0, -0.5, 0.25;
        ParamVector gp = grad_params_weighted(*model, p, x, w);
        auto loss = [&] {
            Vector f = value_of(*model, p, x);
            return w.dot(f);
        };
        for (Eigen::Index k = 0; k < p.size(); ++k) {
            double fd = central_diff(loss, p.values()[k]);
            REQUIRE(rel_err(gp.values()[k], fd) <= 1e-3);
        }
    }
}

TEST_CASE("hessian-vector products match differentiated gradients", "[potentials]") {
    for (std::uint64_t trial = 0; trial < 6; ++trial) {
        std::shared_ptr<PotentialModel> model;
        if (trial % 2 == 0)
            model = std::make_shared<IcnnPotential>(3, std::vector<Eigen::Index>{5, 4},
                                                    ActFn{Act::elu, 0.2});
        else
            model = std::make_shared<MlpPotential>(3, std::vector<Eigen::Index>{5, 4},
                                                   ActFn{Act::elu, 0.2});
        ParamVector p = model->init_params(trial + 3);
        perturb(p, trial + 80, 0.05);
        Batch x = random_batch(trial + 17, 4, 3);
        Batch v = random_batch(trial + 23, 4, 3);

        Batch hv = hvp_input(*model, p, x, v);
        const double h = 1e-5;
        Batch xp = x + h * v, xm = x - h * v;
        Batch fd = (grad_input(*model, p, xp) - grad_input(*model, p, xm)) / (2 * h);
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            for (Eigen::Index j = 0; j < x.cols(); ++j)
                REQUIRE(rel_err(hv(i, j), fd(i, j)) <= 1e-3);
    }
}

TEST_CASE("directional parameter gradients match finite differences", "[potentials]") {
    for (std::uint64_t trial = 0; trial < 6; ++trial) {
        std::shared_ptr<PotentialModel> model;
        if (trial % 2 == 0)
            model = std::make_shared<IcnnPotential>(2, std::vector<Eigen::Index>{4, 3},
                                                    ActFn{Act::elu, 0.2});
        else
            model = std::make_shared<MlpPotential>(2, std::vector<Eigen::Index>{4, 3},
                                                   ActFn{Act::elu, 0.2});
        ParamVector p = model->init_params(trial + 5);
        perturb(p, trial + 90, 0.05);
        Batch x = random_batch(trial + 31, 3, 2);
        Batch u = random_batch(trial + 37, 3, 2);

        ParamVector g = grad_params_dirgrad(*model, p, x, u);
        auto scalar = [&] {
            Batch gx = grad_input(*model, p, x);
            double acc = 0;
            for (Eigen::Index i = 0; i < x.rows(); ++i) acc += gx.row(i).dot(u.row(i));
            return acc;
        };
        for (Eigen::Index k = 0; k < p.size(); ++k) {
            double fd = central_diff(scalar, p.values()[k]);
            REQUIRE(rel_err(g.values()[k], fd) <= 1e-3);
        }
    }
}

TEST_CASE("icnn is midpoint-convex for random parameters", "[potentials]") {
    IcnnPotential icnn(2, {8, 8}, ActFn{Act::elu, 0.2});
    Stream g(4, 2);
    Cursor cur(g, 0);
    int probes = 0;
    for (int pi = 0; pi < 10; ++pi) {
        ParamVector p = icnn.init_params(static_cast<std::uint64_t>(pi));
        perturb(p, static_cast<std::uint64_t>(pi) + 100, 0.5);
        for (int t = 0; t < 100; ++t) {
            Batch xs(2, 2);
            for (int j = 0; j < 4; ++j) xs(j / 2, j % 2) = 3.0 * cur.normal();
            double lam = cur.uniform();
            Batch mid = lam * xs.row(0) + (1 - lam) * xs.row(1);
            Vector fends = value_of(icnn, p, xs);
            Vector fmid = value_of(icnn, p, mid);
            REQUIRE(fmid(0) <= lam * fends(0) + (1 - lam) * fends(1) + 1e-10);
            ++probes;
        }
    }
    REQUIRE(probes == 1000);
    REQUIRE(icnn.convex());
    REQUIRE_THROWS_AS(IcnnPotential(2, {4}, ActFn{Act::leaky_relu, -0.1}), ConfigError);
}

TEST_CASE("coercivity of the quadratic term", "[potentials]") {
    MlpPotential mlp(3, {4}, ActFn{Act::elu, 0.2});
    ParamVector p(mlp.layout());  // zero network
    Stream g(6, 1);
    Cursor cur(g, 0);
    for (int t = 0; t < 10; ++t) {
        Vector dir(3);
        for (int j = 0; j < 3; ++j) dir(j) = cur.normal();
        dir.normalize();
        Batch x = (1000.0 * dir).transpose();
        double ratio = value_of(mlp, p, x)(0) / x.row(0).squaredNorm();
        REQUIRE(std::abs(ratio - 0.5 * std::exp(p.named("log_alpha")(0, 0))) <= 0.05);
    }
}

TEST_CASE("init_nn passthrough and vjp", "[potentials]") {
    InitNN net(2, {8, 8}, ActFn{Act::elu, 0.2});
    ParamVector p = net.init_params(9);
    // zero the output dense → exact passthrough
    p.named("out.kernel").setZero();
    p.named("out.bias").setZero();
    Batch y = random_batch(3, 5, 2);
    Batch out = amort_predict(net, p, y);
    REQUIRE(out == y);

    // vjp against finite differences
    ParamVector p2 = net.init_params(10);
    Batch v = random_batch(11, 4, 2);
    Batch y2 = random_batch(12, 4, 2);
    ParamVector g(net.layout());
    net.vjp(p2, y2, v, &g, nullptr);
    auto scalar = [&] {
        Batch o = amort_predict(net, p2, y2);
        double acc = 0;
        for (Eigen::Index i = 0; i < o.rows(); ++i) acc += o.row(i).dot(v.row(i));
        return acc;
    };
    for (Eigen::Index k = 0; k < p2.size(); ++k) {
        double fd = central_diff(scalar, p2.values()[k]);
        REQUIRE(rel_err(g.values()[k], fd) <= 1e-3);
    }
}

TEST_CASE("gradient-mode amortizer of a quadratic is the identity", "[potentials]") {
    auto quad = std::make_shared<MlpPotential>(2, std::vector<Eigen::Index>{4},
                                               ActFn{Act::elu, 0.2});
    GradAmortizer am(quad);
    ParamVector p(am.layout());  // zero network, log_alpha = 0 → g(y) = ½‖y‖²
    Batch y = random_batch(14, 6, 2);
    Batch out = amort_predict(am, p, y);
    for (Eigen::Index i = 0; i < y.rows(); ++i)
        for (Eigen::Index j = 0; j < 2; ++j) REQUIRE(out(i, j) == Catch::Approx(y(i, j)).epsilon(1e-14));
}

TEST_CASE("pretraining reaches the identity regime", "[potentials]") {
    // exact-identity starts report zero loss
    IcnnPotential icnn(2, {4, 3}, ActFn{Act::elu, 0.2});
    ParamVector pz(icnn.layout());
    PretrainConfig quick;
    quick.n_iters = 0;
    quick.batch = 256;
    PretrainReport r0 = pretrain_potential(icnn, pz, Sampler::standard_normal(2), quick);
    REQUIRE(r0.heldout_loss == 0.0);
    REQUIRE(r0.ok);

    InitNN net(2, {8}, ActFn{Act::elu, 0.2});
    ParamVector pn = net.init_params(2);
    pn.named("out.kernel").setZero();
    pn.named("out.bias").setZero();
    PretrainReport r1 = pretrain_amortizer(net, pn, Sampler::standard_normal(2), quick);
    REQUIRE(r1.heldout_loss == 0.0);

    // random-init MLP potential pretrains to the gate
    MlpPotential mlp(2, {16, 16}, ActFn{Act::elu, 0.2});
    ParamVector pm = mlp.init_params(7);
    PretrainConfig cfg;
    cfg.n_iters = 2000;
    cfg.batch = 256;
    cfg.seed = 3;
    PretrainReport r2 = pretrain_potential(mlp, pm, Sampler::standard_normal(2), cfg);
    INFO("held-out potential pretrain loss " << r2.heldout_loss);
    REQUIRE(r2.ok);

    // amortizer pretrains and predicts near-identity on the sampler
    InitNN am(2, {16, 16}, ActFn{Act::elu, 0.2});
    ParamVector pa = am.init_params(8);
    PretrainReport r3 = pretrain_amortizer(am, pa, Sampler::standard_normal(2), cfg);
    REQUIRE(r3.ok);
    Batch y = Sampler::standard_normal(2).sample(512, 99);
    Batch pred = amort_predict(am, pa, y);
    REQUIRE((pred - y).cwiseAbs().maxCoeff() <= 0.25);
}

TEST_CASE("factories reject unknown kinds and build defaults", "[potentials]") {
    REQUIRE_THROWS_AS(make_potential("conv", 2, {4}, ActFn{Act::elu, 0.2}), ConfigError);
    REQUIRE_THROWS_AS(make_amortizer("direct", 2, {4}, ActFn{Act::elu, 0.2}), ConfigError);
    auto icnn = make_potential("icnn", 4, default_hidden_nd(4), ActFn{Act::elu, 0.2});
    REQUIRE(icnn->convex());
    REQUIRE(default_hidden_nd(4) == std::vector<Eigen::Index>{64, 64, 32});
    REQUIRE(default_hidden_nd(100) == std::vector<Eigen::Index>{200, 200, 100});
    REQUIRE(default_hidden_2d() == std::vector<Eigen::Index>{128, 128});
    auto am = make_amortizer("grad_icnn", 2, {8}, ActFn{Act::elu, 0.2});
    REQUIRE(am->dim() == 2);
}
