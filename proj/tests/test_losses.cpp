#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "ggan/losses.hpp"
#include "ggan/models.hpp"
#include "ref_ops.hpp"
#include "test_util.hpp"

using namespace ggan;
using ggan::test::random_tensor;
using ggan::test::random_vec;

TEST_CASE("generator loss: guidance off reduces to the adversarial term") {
    Graph g(1);
    LossConfig cfg;
    Tensor d_fake = make_tensor({2}, {0.5f, 0.5f});
    Tensor loss = generator_loss(g, cfg, d_fake, nullptr, {});
    CHECK(loss->scalar() == doctest::Approx(-0.5).epsilon(1e-7));
}

TEST_CASE("generator loss: guidance adds lambda times the NLL") {
    Graph g(1);
    LossConfig cfg;
    cfg.lambda = 1.0f;
    Tensor d_fake = make_tensor({2}, {0.5f, 0.5f});
    float lhalf = std::log(0.5f);
    Tensor lp = make_tensor({1, 2}, {lhalf, lhalf});  // NLL = ln 2
    Tensor loss = generator_loss(g, cfg, d_fake, lp, {0});
    CHECK(loss->scalar() == doctest::Approx(-0.5 + 0.6931472).epsilon(1e-6));
}

TEST_CASE("generator loss: NS-GAN at d_fake 0.5 gives ln 2") {
    Graph g(1);
    LossConfig cfg;
    cfg.family = LossFamily::NsGan;
    Tensor d_fake = make_tensor({2}, {0.5f, 0.5f});
    Tensor loss = generator_loss(g, cfg, d_fake, nullptr, {});
    CHECK(loss->scalar() == doctest::Approx(std::log(2.0)).epsilon(1e-6));
}

TEST_CASE("generator loss: guidance additivity is bit-exact") {
    std::mt19937 rng(5);
    Tensor d_fake = random_tensor(rng, {6}, 0.05f, 0.95f);
    Tensor lp;
    {
        Graph g(2);
        lp = g.log_softmax(random_tensor(rng, {8, 4}));
    }
    Tensor lp_const = make_tensor(lp->shape, lp->data);
    std::vector<int> labels = {0, 1, 2, 3, 0, 1, 2, 3};
    for (LossFamily fam : {LossFamily::SnGan, LossFamily::NsGan, LossFamily::WganGp}) {
        LossConfig with, without;
        with.family = without.family = fam;
        with.lambda = 0.7f;
        Graph g1(1), g2(1), g3(1);
        float lw = generator_loss(g1, with, d_fake, lp_const, labels)->scalar();
        float l0 = generator_loss(g2, without, d_fake, nullptr, {})->scalar();
        float nll = g3.nll_loss(lp_const, labels)->scalar();
        volatile float scaled = 0.7f * nll;
        volatile float expect = l0 + scaled;
        CHECK(lw == expect);
    }
}

TEST_CASE("generator loss: invalid configurations throw") {
    Graph g(1);
    LossConfig cfg;
    cfg.lambda = -0.1f;
    Tensor d_fake = make_tensor({1}, {0.5f});
    CHECK_THROWS_AS(generator_loss(g, cfg, d_fake, nullptr, {}), std::invalid_argument);
    LossConfig ns;
    ns.family = LossFamily::NsGan;
    Tensor bad = make_tensor({2}, {0.5f, 0.0f});
    CHECK_THROWS_AS(generator_loss(g, ns, bad, nullptr, {}), std::domain_error);
}

TEST_CASE("generator loss: SN-GAN gradient w.r.t. d_fake is -1/B") {
    Graph g(1);
    LossConfig cfg;
    Tensor d_fake = make_param({4}, {0.2f, 0.4f, 0.6f, 0.8f});
    Tensor loss = generator_loss(g, cfg, d_fake, nullptr, {});
    g.backward(loss);
    for (float gv : d_fake->grad) CHECK(gv == doctest::Approx(-0.25).epsilon(1e-6));
}

TEST_CASE("discriminator loss: bounds, symmetry, confusion point") {
    Graph g(1);
    LossConfig sn;
    Tensor best_real = make_tensor({2}, {0.999f, 0.999f});
    Tensor best_fake = make_tensor({2}, {0.001f, 0.001f});
    CHECK(discriminator_loss(g, sn, best_real, best_fake)->scalar() ==
          doctest::Approx(-0.998).epsilon(1e-5));

    Tensor same = make_tensor({3}, {0.3f, 0.6f, 0.9f});
    CHECK(discriminator_loss(g, sn, same, same)->scalar() == 0.0f);

    LossConfig ns;
    ns.family = LossFamily::NsGan;
    Tensor half = make_tensor({1}, {0.5f});
    CHECK(discriminator_loss(g, ns, half, half)->scalar() ==
          doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-6));
}

TEST_CASE("discriminator loss: WGAN family shares the SN-GAN formula") {
    std::mt19937 rng(9);
    Tensor r = random_tensor(rng, {5}, 0.05f, 0.95f);
    Tensor f = random_tensor(rng, {5}, 0.05f, 0.95f);
    Graph g(1);
    LossConfig sn, gp;
    gp.family = LossFamily::WganGp;
    CHECK(discriminator_loss(g, sn, r, f)->scalar() ==
          discriminator_loss(g, gp, r, f)->scalar());
}

TEST_CASE("gradient penalty: unit-norm linear head gives zero") {
    std::mt19937 rng(11);
    int B = 3, F = 2, W = 4;
    auto wdata = random_vec(rng, 8);
    double n = 0;
    for (float v : wdata) n += static_cast<double>(v) * v;
    for (auto& v : wdata) v = static_cast<float>(v / std::sqrt(n));
    Tensor w = make_param({1, 8}, wdata);
    DiscForward disc = [&](Graph& g, const Tensor& x) {
        return g.reshape(g.matmul(g.reshape(x, {B, F * W}), g.transpose(w)), {B});
    };
    Graph g(3);
    Tensor x_clean = random_tensor(rng, {B, F, W});
    Tensor x_fake = random_tensor(rng, {B, F, W});
    Tensor p = gradient_penalty(g, disc, x_clean, x_fake);
    CHECK(p->scalar() == doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("gradient penalty: norm-2 linear head gives one") {
    std::mt19937 rng(12);
    int B = 2, F = 3, W = 4;
    auto wdata = random_vec(rng, 12);
    double n = 0;
    for (float v : wdata) n += static_cast<double>(v) * v;
    for (auto& v : wdata) v = static_cast<float>(2.0 * v / std::sqrt(n));
    Tensor w = make_param({1, 12}, wdata);
    DiscForward disc = [&](Graph& g, const Tensor& x) {
        return g.reshape(g.matmul(g.reshape(x, {B, F * W}), g.transpose(w)), {B});
    };
    Graph g(4);
    Tensor p = gradient_penalty(g, disc, random_tensor(rng, {B, F, W}),
                                random_tensor(rng, {B, F, W}));
    CHECK(p->scalar() == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("gradient penalty: parameter gradients match a finite-difference oracle") {
    std::mt19937 rng(13);
    int B = 2, F = 3, W = 8;
    const int Co = 4, K = 5, P = 2;
    Conv1dLayer conv;
    conv.w = make_param({Co, F, K}, random_vec(rng, Co * F * K, -0.4f, 0.4f));
    conv.b = make_param({Co}, random_vec(rng, Co, -0.2f, 0.2f));
    conv.stride = 1;
    conv.padding = P;
    Tensor hw = make_param({1, Co * (W / 2)}, random_vec(rng, Co * (W / 2), -0.4f, 0.4f));
    Tensor hb = make_param({1}, {0.1f});
    DiscForward disc = [&](Graph& g, const Tensor& x) {
        Tensor h = g.maxpool1d(g.leaky_relu(conv.forward(g, x), 0.2f), 2);
        Tensor s = g.add_bias(g.matmul(g.reshape(h, {B, Co * (W / 2)}), g.transpose(hw)), hb);
        return g.sigmoid(g.reshape(s, {B}));
    };
    // clean == fake makes the interpolate equal to the input for every alpha,
    // so the oracle does not need to reproduce the alpha draws
    Tensor x = random_tensor(rng, {B, F, W});
    auto engine = [&](Graph& g) { return gradient_penalty(g, disc, x, x); };

    refops::dvec xd(x->data.begin(), x->data.end());
    // independent oracle: hand-rolled adjoint of D through sigmoid, linear,
    // maxpool, leaky-ReLU and conv, then the penalty on the input-gradient
    auto ref = [&](const ggan::test::DVecs& p) {
        double acc = 0;
        int Tp = W / 2;
        for (int b = 0; b < B; ++b) {
            refops::dvec xs(xd.begin() + static_cast<std::size_t>(b) * F * W,
                            xd.begin() + static_cast<std::size_t>(b + 1) * F * W);
            int To;
            refops::dvec a = refops::conv1d(xs, F, W, p[0], Co, K, p[1], 1, P, To);
            refops::dvec l = refops::leaky_relu(a, 0.2);
            refops::dvec m = refops::maxpool1d(l, Co, To, 2, Tp);
            refops::dvec z = refops::linear(m, 1, Co * Tp, p[2], 1, p[3]);
            double s = 1.0 / (1.0 + std::exp(-z[0]));
            double sp = s * (1.0 - s);
            refops::dvec gl(static_cast<std::size_t>(Co) * To, 0.0);
            for (int c = 0; c < Co; ++c)
                for (int t = 0; t < Tp; ++t) {
                    int am = 2 * t;
                    if (l[static_cast<std::size_t>(c) * To + 2 * t + 1] >
                        l[static_cast<std::size_t>(c) * To + 2 * t])
                        am = 2 * t + 1;
                    gl[static_cast<std::size_t>(c) * To + am] +=
                        sp * p[2][static_cast<std::size_t>(c) * Tp + t];
                }
            refops::dvec ga(gl.size());
            for (std::size_t i = 0; i < gl.size(); ++i)
                ga[i] = gl[i] * (a[i] > 0 ? 1.0 : 0.2);
            refops::dvec gx(static_cast<std::size_t>(F) * W, 0.0);
            for (int c = 0; c < Co; ++c)
                for (int t = 0; t < To; ++t)
                    for (int ci = 0; ci < F; ++ci)
                        for (int k = 0; k < K; ++k) {
                            int src = t + k - P;
                            if (src >= 0 && src < W)
                                gx[static_cast<std::size_t>(ci) * W + src] +=
                                    ga[static_cast<std::size_t>(c) * To + t] *
                                    p[0][(static_cast<std::size_t>(c) * F + ci) * K + k];
                        }
            double n = 0;
            for (double v : gx) n += v * v;
            n = std::sqrt(n);
            acc += (n - 1.0) * (n - 1.0);
        }
        return acc / B;
    };
    auto rep = ggan::test::grad_check_ref(engine, ref, {conv.w, conv.b, hw, hb});
    CAPTURE(rep.max_abs_err);
    CAPTURE(rep.worst_rel);
    CHECK(rep.ok(2e-3));
}

TEST_CASE("total discriminator loss: reduction, arithmetic, family guard") {
    Graph g(1);
    LossConfig gp;
    gp.family = LossFamily::WganGp;
    gp.lambda_gp = 10.0f;
    Tensor r = make_tensor({2}, {0.6f, 0.7f});
    Tensor f = make_tensor({2}, {0.5f, 0.1f});
    float base = discriminator_loss(g, gp, r, f)->scalar();

    LossConfig gp0 = gp;
    gp0.lambda_gp = 0.0f;
    Tensor pen = scalar_tensor(1.0f);
    CHECK(total_discriminator_loss(g, gp0, r, f, pen)->scalar() == base);

    Tensor manual_r = make_tensor({1}, {0.65f});
    Tensor manual_f = make_tensor({1}, {0.35f});
    // base -0.3, lambda_gp 10, penalty 1 -> 9.7
    CHECK(total_discriminator_loss(g, gp, manual_r, manual_f, pen)->scalar() ==
          doctest::Approx(9.7).epsilon(1e-6));

    LossConfig sn;
    CHECK_THROWS_AS(total_discriminator_loss(g, sn, r, f, pen), std::invalid_argument);
    // SN-GAN path without penalty equals the WGAN-GP path with a zero weight
    CHECK(total_discriminator_loss(g, sn, r, f)->scalar() == base);
}

TEST_CASE("log op: values, gradient, and positivity guard") {
    Graph g(1);
    Tensor x = make_param({3}, {0.5f, 1.0f, 2.0f});
    Tensor y = g.log(x);
    CHECK(y->data[0] == doctest::Approx(std::log(0.5f)));
    CHECK(y->data[1] == 0.0f);
    g.backward(g.sum_all(y));
    for (int i = 0; i < 3; ++i)
        CHECK(x->grad[i] == doctest::Approx(1.0f / x->data[i]).epsilon(1e-6));
    Tensor bad = make_tensor({1}, {0.0f});
    CHECK_THROWS_AS(g.log(bad), NumericsError);
}
