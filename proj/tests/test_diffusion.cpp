#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers/gradcheck.hpp"
#include "pstf/core/ops.hpp"
#include "pstf/model/model.hpp"
#include "pstf/model/schedule.hpp"

using namespace pstf;

namespace {

WorldConfig tiny_world() {
    WorldConfig wc;
    wc.image_size = 8;
    wc.n_layers = 3;
    wc.d_latent = 12;
    wc.d_id = 8;
    return wc;
}

ModelConfig tiny_model() {
    ModelConfig mc;
    mc.d_ctx = 8;
    mc.d_model = 16;
    mc.n_heads = 2;
    mc.id_tokens = 2;
    mc.channels = {8, 12, 16};
    mc.gn_groups = 4;
    mc.time_embed_dim = 16;
    mc.timesteps = 50;
    return mc;
}

}  // namespace

TEST_CASE("schedule bounds and monotonicity") {
    NoiseSchedule ns(200, 1e-4, 0.02);
    REQUIRE(ns.timesteps() == 200);
    double prev = 1.0;
    for (int t = 0; t < 200; ++t) {
        CHECK(ns.betas[(size_t)t] > 0.0);
        CHECK(ns.betas[(size_t)t] < 1.0);
        CHECK(ns.alpha_bar(t) < prev);  // strictly decreasing
        prev = ns.alpha_bar(t);
    }
    CHECK(ns.alpha_bar(0) == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(ns.alpha_bar(-1) == 1.0);
    CHECK_THROWS_AS(ns.alpha_bar(200), ConfigError);
}

TEST_CASE("add_noise basics and Monte-Carlo variance") {
    NoiseSchedule ns(200, 1e-4, 0.02);
    Rng rng(1);
    Tensor x0 = Tensor::randn({3, 4, 4}, rng, 0.5);

    SUBCASE("t=0 is within the early-noise bound") {
        Tensor eps = Tensor::randn(x0.shape(), rng);
        Tensor xt = add_noise(x0, 0, eps, ns);
        const double bound = std::sqrt(1.0 - ns.alpha_bar(0));
        for (int64_t i = 0; i < x0.numel(); ++i)
            CHECK(std::abs(xt.ptr()[i] - x0.ptr()[i]) <=
                  bound * std::abs(eps.ptr()[i]) + 1e-3);
    }
    SUBCASE("zero eps scales exactly") {
        Tensor eps = Tensor::zeros(x0.shape());
        const int t = 120;
        Tensor xt = add_noise(x0, t, eps, ns);
        const double s = std::sqrt(ns.alpha_bar(t));
        for (int64_t i = 0; i < x0.numel(); ++i)
            CHECK(xt.ptr()[i] == doctest::Approx(s * x0.ptr()[i]).epsilon(1e-12));
    }
    SUBCASE("per-pixel variance matches 1 - alpha_bar over 1e4 draws") {
        const int t = 150;
        const int n = 10000;
        const int64_t pix = 5;
        double mean = 0.0, m2 = 0.0;
        for (int i = 0; i < n; ++i) {
            Tensor eps = Tensor::randn(x0.shape(), rng);
            const double v = add_noise(x0, t, eps, ns).ptr()[pix];
            mean += v;
            m2 += v * v;
        }
        mean /= n;
        const double var = m2 / n - mean * mean;
        const double expect = 1.0 - ns.alpha_bar(t);
        CHECK(var == doctest::Approx(expect).epsilon(0.05));
    }
    SUBCASE("t out of range") {
        Tensor eps = Tensor::zeros(x0.shape());
        CHECK_THROWS_AS(add_noise(x0, 200, eps, ns), ConfigError);
        CHECK_THROWS_AS(add_noise(x0, -1, eps, ns), ConfigError);
    }
}

TEST_CASE("ddim x0 approximation") {
    NoiseSchedule ns(200, 1e-4, 0.02);
    Rng rng(2);
    Tensor x0 = Tensor::randn({3, 4, 4}, rng, 0.5);
    Tensor eps = Tensor::randn(x0.shape(), rng);

    SUBCASE("true eps inverts exactly") {
        for (int t : {3, 77, 199}) {
            Tensor xt = add_noise(x0, t, eps, ns);
            Tensor rec = ddim_x0_approx(xt, t, eps, ns);
            for (int64_t i = 0; i < x0.numel(); ++i)
                CHECK(std::abs(rec.ptr()[i] - x0.ptr()[i]) < 1e-5);
        }
    }
    SUBCASE("t near 0: approximation stays close to x_t") {
        Tensor xt = add_noise(x0, 0, eps, ns);
        Tensor rec = ddim_x0_approx(xt, 0, eps, ns);
        for (int64_t i = 0; i < x0.numel(); ++i)
            CHECK(std::abs(rec.ptr()[i] - xt.ptr()[i]) < 0.02);
    }
    SUBCASE("error shrinks monotonically as noise_est approaches truth") {
        const int t = 120;
        Tensor xt = add_noise(x0, t, eps, ns);
        Tensor wrong = Tensor::randn(x0.shape(), rng);
        double prev_err = 1e300;
        for (int k = 0; k <= 4; ++k) {
            const double f = k / 4.0;  // 0 = wrong, 1 = exact
            Tensor est = lincomb(wrong, 1.0 - f, eps, f);
            Tensor rec = ddim_x0_approx(xt, t, est, ns);
            double err = 0.0;
            for (int64_t i = 0; i < x0.numel(); ++i) {
                const double d = rec.ptr()[i] - x0.ptr()[i];
                err += d * d;
            }
            CHECK(err < prev_err);
            prev_err = err;
        }
    }
}

TEST_CASE("ddim_step: closed-loop reconstruction, final-step algebra, ordering") {
    NoiseSchedule ns(200, 1e-4, 0.02);
    Rng rng(3);
    Tensor x0 = Tensor::randn({3, 4, 4}, rng, 0.5);
    Tensor eps = Tensor::randn(x0.shape(), rng);

    SUBCASE("perfect noise estimates walk back to x0") {
        auto ts = sampling_timesteps(200, 10);
        Tensor x = add_noise(x0, ts.front(), eps, ns);
        for (size_t i = 0; i < ts.size(); ++i) {
            const int t = ts[i];
            const int t_prev = i + 1 < ts.size() ? ts[i + 1] : -1;
            x = ddim_step(x, t, t_prev, eps, ns);
        }
        for (int64_t i = 0; i < x0.numel(); ++i)
            CHECK(std::abs(x.ptr()[i] - x0.ptr()[i]) < 1e-4);
    }
    SUBCASE("one step to the clean image equals ddim_x0_approx") {
        const int t = 140;
        Tensor xt = add_noise(x0, t, eps, ns);
        Tensor est = Tensor::randn(x0.shape(), rng);
        Tensor a = ddim_step(xt, t, -1, est, ns);
        Tensor b = ddim_x0_approx(xt, t, est, ns);
        CHECK(a.data() == b.data());
    }
    SUBCASE("ordering violation") {
        Tensor xt = add_noise(x0, 10, eps, ns);
        CHECK_THROWS_AS(ddim_step(xt, 10, 10, eps, ns), ConfigError);
        CHECK_THROWS_AS(ddim_step(xt, 10, 12, eps, ns), ConfigError);
    }
    SUBCASE("deterministic at eta 0") {
        Tensor xt = add_noise(x0, 99, eps, ns);
        Tensor a = ddim_step(xt, 99, 50, eps, ns);
        Tensor b = ddim_step(xt, 99, 50, eps, ns);
        CHECK(a.data() == b.data());
    }
    SUBCASE("stochastic eta needs an rng and perturbs the update") {
        Tensor xt = add_noise(x0, 99, eps, ns);
        CHECK_THROWS_AS(ddim_step(xt, 99, 50, eps, ns, 0.5), ConfigError);
        Rng r1(5), r2(5);
        Tensor a = ddim_step(xt, 99, 50, eps, ns, 0.5, &r1);
        Tensor b = ddim_step(xt, 99, 50, eps, ns, 0.5, &r2);
        CHECK(a.data() == b.data());  // same rng state, same draw
        Tensor det = ddim_step(xt, 99, 50, eps, ns);
        CHECK(a.data() != det.data());
        for (double v : a.data()) CHECK(std::isfinite(v));
    }
}

TEST_CASE("cfg_combine endpoints") {
    Rng rng(4);
    Tensor c = Tensor::randn({3, 2, 2}, rng);
    Tensor u = Tensor::randn({3, 2, 2}, rng);
    CHECK(cfg_combine(c, u, 1.0).data() == c.data());
    CHECK(cfg_combine(c, u, 0.0).data() == u.data());
    Tensor both = cfg_combine(c, c, 5.0);
    for (int64_t i = 0; i < c.numel(); ++i)
        CHECK(both.ptr()[i] == doctest::Approx(c.ptr()[i]).epsilon(1e-12));
}

TEST_CASE("sampling timesteps are strictly decreasing and span the schedule") {
    auto ts = sampling_timesteps(200, 50);
    REQUIRE(ts.size() == 50);
    CHECK(ts.front() == 199);
    CHECK(ts.back() == 0);
    for (size_t i = 1; i < ts.size(); ++i) CHECK(ts[i] < ts[i - 1]);
}

TEST_CASE("unet forward: determinism and spatial-branch zero-init no-op") {
    WorldConfig wc = tiny_world();
    ModelConfig mc = tiny_model();
    PstfModel model;
    model.build(wc, mc, 33);

    Rng rng(5);
    Tensor x = Tensor::randn({3, 8, 8}, rng);
    FaceEmbedding f;
    f.v.assign((size_t)wc.d_id, 0.0);
    f.v[0] = 1.0;
    WPlusLatent w(wc.n_layers, wc.d_latent);
    for (auto& v : w.mat.data()) v = rng.normal();
    ConditioningBundle bundle = model.make_bundle(1, f, w, 1.0, 1.0);

    NoGradGuard ng;
    Tensor zero_hm = Tensor::zeros({1, 8, 8});
    Tensor with_branch = model.predict_noise(x, 7, bundle, zero_hm);
    Tensor no_branch = model.predict_noise(x, 7, bundle, Tensor());
    CHECK(with_branch.data() == no_branch.data());  // zero-init residual convention

    Tensor again = model.predict_noise(x, 7, bundle, zero_hm);
    CHECK(again.data() == with_branch.data());  // bit-identical determinism
}

TEST_CASE("gradients through predict_noise match finite differences") {
    WorldConfig wc = tiny_world();
    ModelConfig mc = tiny_model();
    PstfModel model;
    model.build(wc, mc, 34);
    model.set_train_mode("full");

    Rng rng(6);
    Tensor x = Tensor::randn({3, 8, 8}, rng);
    Tensor hm = Tensor::randn({1, 8, 8}, rng, 0.3);
    FaceEmbedding f;
    f.v.assign((size_t)wc.d_id, 0.0);
    f.v[1] = 1.0;
    WPlusLatent w(wc.n_layers, wc.d_latent);
    for (auto& v : w.mat.data()) v = rng.normal();
    ConditioningBundle bundle = model.make_bundle(1, f, w, 1.0, 1.0);

    std::vector<Scalar> proj;
    Rng prng(7);
    for (int i = 0; i < 3 * 8 * 8; ++i) proj.push_back(prng.normal());
    auto loss = [&] { return dot_const(model.predict_noise(x, 3, bundle, hm), proj); };

    pstf_test::GradCheck gc;
    Rng pick(8);
    int checked = 0;
    while (checked < 10) {
        auto& entry = model.params.at(pick.uniform_index(model.params.size()));
        // zero-init taps have exactly-zero analytic and numeric grads only in
        // pairs; still valid, but skip all-zero tensors with no visible path
        const int64_t idx = (int64_t)pick.uniform_index((uint64_t)entry.tensor.numel());
        model.params.zero_grads();
        CHECK(gc.max_rel_err(loss, entry.tensor, {idx}) < 1e-3);
        ++checked;
    }
}
