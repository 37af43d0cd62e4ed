#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers/gradcheck.hpp"
#include "helpers/oracles.hpp"
#include "pstf/core/ops.hpp"
#include "pstf/model/tdca.hpp"

using namespace pstf;

namespace {

ModelConfig tiny_cfg() {
    ModelConfig cfg;
    cfg.d_ctx = 8;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    return cfg;
}

ConditioningBundle random_bundle(const ModelConfig& cfg, Rng& rng, double l1 = 1.0,
                                 double l2 = 1.0) {
    ConditioningBundle b;
    b.text_tokens = Tensor::randn({3, cfg.d_ctx}, rng);
    b.id_tokens = Tensor::randn({4, cfg.d_ctx}, rng);
    b.attr_tokens = Tensor::randn({6, cfg.d_ctx}, rng);
    b.lambda1 = l1;
    b.lambda2 = l2;
    return b;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0;
    for (int64_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::abs(a.ptr()[i] - b.ptr()[i]));
    return m;
}

double l2_diff(const Tensor& a, const Tensor& b) {
    double s = 0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        const double d = a.ptr()[i] - b.ptr()[i];
        s += d * d;
    }
    return std::sqrt(s);
}

}  // namespace

TEST_CASE("attend: single key/value returns the value for every query") {
    Rng rng(1);
    Tensor q = Tensor::randn({5, 8}, rng);
    Tensor k = Tensor::randn({1, 8}, rng);
    Tensor v = Tensor::randn({1, 8}, rng);
    Tensor out = attend(q, k, v, 2);
    for (int i = 0; i < 5; ++i)
        for (int c = 0; c < 8; ++c)
            CHECK(out.ptr()[(size_t)i * 8 + c] == doctest::Approx(v.ptr()[c]).epsilon(1e-12));
}

TEST_CASE("attend: softmax saturation picks the aligned value") {
    const int d = 8;
    Tensor q = Tensor::zeros({1, d});
    Tensor k = Tensor::zeros({3, d});
    Tensor v = Tensor::zeros({3, d});
    // orthogonal keys; key 1 aligned with the query at large scale
    for (int h = 0; h < 2; ++h) {
        q.ptr()[h * 4 + 0] = 50.0;
        k.ptr()[(size_t)0 * d + h * 4 + 1] = 50.0;
        k.ptr()[(size_t)1 * d + h * 4 + 0] = 50.0;
        k.ptr()[(size_t)2 * d + h * 4 + 2] = 50.0;
    }
    for (int j = 0; j < 3; ++j)
        for (int c = 0; c < d; ++c) v.ptr()[(size_t)j * d + c] = j * 10.0 + c;
    Tensor out = attend(q, k, v, 2);
    for (int c = 0; c < d; ++c)
        CHECK(out.ptr()[c] == doctest::Approx(v.ptr()[(size_t)1 * d + c]).epsilon(1e-9));
}

TEST_CASE("attend matches the direct-summation oracle and rows sum to 1") {
    Rng rng(2);
    const int tq = 4, tk = 8, d = 8, heads = 2;
    Tensor q = Tensor::randn({tq, d}, rng);
    Tensor k = Tensor::randn({tk, d}, rng);
    Tensor v = Tensor::randn({tk, d}, rng);

    std::vector<TraceIO::Entry> entries;
    TraceIO hook;
    hook.mode = TraceIO::Mode::kRecord;
    hook.entries = &entries;

    Tensor out = attend(q, k, v, heads, &hook);
    auto expect = pstf_test::attention_oracle(q.data(), k.data(), v.data(), tq, tk, d, heads);
    for (int64_t i = 0; i < out.numel(); ++i)
        CHECK(std::abs(out.ptr()[i] - expect[(size_t)i]) < 1e-6);

    REQUIRE(entries.size() == (size_t)heads);
    for (const auto& e : entries) {
        REQUIRE(e.rows == tq);
        REQUIRE(e.cols == tk);
        for (int r = 0; r < e.rows; ++r) {
            double s = 0;
            for (int c = 0; c < e.cols; ++c) s += e.probs[(size_t)r * e.cols + c];
            CHECK(std::abs(s - 1.0) < 1e-6);
        }
    }
}

TEST_CASE("attend rejects mismatched dims") {
    Rng rng(3);
    Tensor q = Tensor::randn({2, 8}, rng);
    Tensor k = Tensor::randn({3, 6}, rng);
    Tensor v = Tensor::randn({3, 6}, rng);
    CHECK_THROWS_AS(attend(q, k, v, 2), ConfigError);
    Tensor k2 = Tensor::randn({3, 8}, rng);
    Tensor v2 = Tensor::randn({4, 8}, rng);
    CHECK_THROWS_AS(attend(q, k2, v2, 2), ConfigError);
}

TEST_CASE("tdca_forward: zero gains equal the text-only block") {
    ModelConfig cfg = tiny_cfg();
    Rng rng(4);
    ParamStore params;
    TdcaBlock block;
    block.build("blk", 12, cfg, AttnTopology::kTriplet, params, rng);
    Tensor x = Tensor::randn({5, 12}, rng);
    ConditioningBundle b = random_bundle(cfg, rng, 0.0, 0.0);

    Tensor out = block.forward(x, b);
    // text-only reference assembled from the block's own pieces
    Tensor xn = layer_norm(x, block.ln_g, block.ln_b);
    Tensor q = linear(xn, block.q_w, block.q_b);
    Tensor zt = attend(q, linear(b.text_tokens, block.text_k, Tensor()),
                       linear(b.text_tokens, block.text_v, Tensor()), cfg.n_heads);
    Tensor ref = add(x, linear(zt, block.out_w, block.out_b));
    CHECK(out.data() == ref.data());
}

TEST_CASE("tdca_forward is affine in the gains") {
    ModelConfig cfg = tiny_cfg();
    Rng rng(5);
    ParamStore params;
    TdcaBlock block;
    block.build("blk", 12, cfg, AttnTopology::kTriplet, params, rng);
    Tensor x = Tensor::randn({5, 12}, rng);
    ConditioningBundle b = random_bundle(cfg, rng);

    auto at = [&](double l1, double l2) {
        ConditioningBundle bb = b;
        bb.lambda1 = l1;
        bb.lambda2 = l2;
        return block.forward(x, bb);
    };
    Tensor base = at(0.0, 0.0);
    Tensor bi = at(1.0, 0.0);
    Tensor bj = at(0.0, 1.0);
    // three-point interpolation check
    for (auto [l1, l2] : std::vector<std::pair<double, double>>{
             {0.7, 1.3}, {2.0, 0.5}, {0.25, 0.25}}) {
        Tensor z = at(l1, l2);
        for (int64_t i = 0; i < z.numel(); ++i) {
            const double expect = base.ptr()[i] + l1 * (bi.ptr()[i] - base.ptr()[i]) +
                                  l2 * (bj.ptr()[i] - base.ptr()[i]);
            CHECK(std::abs(z.ptr()[i] - expect) < 1e-6);
        }
    }
}

TEST_CASE("decoupling: identity branch ignores attribute tokens exactly") {
    ModelConfig cfg = tiny_cfg();
    Rng rng(6);
    ParamStore params;
    TdcaBlock block;
    block.build("blk", 12, cfg, AttnTopology::kTriplet, params, rng);
    Tensor x = Tensor::randn({5, 12}, rng);
    ConditioningBundle b = random_bundle(cfg, rng);

    auto before = block.branch_outputs(x, b);
    for (int trial = 0; trial < 100; ++trial) {
        ConditioningBundle pert = b;
        pert.attr_tokens = Tensor::randn({6, cfg.d_ctx}, rng);
        auto after = block.branch_outputs(x, pert);
        CHECK(after.id.data() == before.id.data());      // bit level
        CHECK(after.text.data() == before.text.data());  // text path untouched too
    }
}

TEST_CASE("concat baseline: attribute perturbation moves the combined branch") {
    ModelConfig cfg = tiny_cfg();
    Rng rng(7);
    ParamStore params;
    TdcaBlock block;
    block.build("blk", 12, cfg, AttnTopology::kConcat, params, rng);
    Tensor x = Tensor::randn({5, 12}, rng);
    ConditioningBundle b = random_bundle(cfg, rng);

    auto before = block.branch_outputs(x, b);
    int moved = 0;
    for (int trial = 0; trial < 100; ++trial) {
        ConditioningBundle pert = b;
        pert.attr_tokens = Tensor::randn({6, cfg.d_ctx}, rng);
        auto after = block.branch_outputs(x, pert);
        if (l2_diff(after.id, before.id) > 1e-6) ++moved;
    }
    CHECK(moved == 100);
}

TEST_CASE("concat baseline: duplicated keys split softmax mass evenly") {
    Rng rng(8);
    const int d = 8, tk = 4;
    Tensor q = Tensor::randn({3, d}, rng);
    Tensor half = Tensor::randn({tk, d}, rng);
    Tensor k = concat0(half, half);
    Tensor v = concat0(half, half);

    std::vector<TraceIO::Entry> entries;
    TraceIO hook;
    hook.mode = TraceIO::Mode::kRecord;
    hook.entries = &entries;
    attend(q, k, v, 2, &hook);
    for (const auto& e : entries)
        for (int r = 0; r < e.rows; ++r)
            for (int c = 0; c < tk; ++c)
                CHECK(e.probs[(size_t)r * e.cols + c] ==
                      doctest::Approx(e.probs[(size_t)r * e.cols + tk + c]).epsilon(1e-9));
}

TEST_CASE("concat baseline: zero gain gives the text-only output") {
    ModelConfig cfg = tiny_cfg();
    Rng rng(9);
    ParamStore params;
    TdcaBlock block;
    block.build("blk", 12, cfg, AttnTopology::kConcat, params, rng);
    Tensor x = Tensor::randn({5, 12}, rng);
    ConditioningBundle b = random_bundle(cfg, rng, 0.0, 0.0);
    Tensor out = block.forward(x, b);

    Tensor xn = layer_norm(x, block.ln_g, block.ln_b);
    Tensor q = linear(xn, block.q_w, block.q_b);
    Tensor zt = attend(q, linear(b.text_tokens, block.text_k, Tensor()),
                       linear(b.text_tokens, block.text_v, Tensor()), cfg.n_heads);
    Tensor ref = add(x, linear(zt, block.out_w, block.out_b));
    CHECK(max_abs_diff(out, ref) == 0.0);
}

TEST_CASE("gradients through tdca_forward match finite differences") {
    ModelConfig cfg = tiny_cfg();
    Rng rng(10);
    ParamStore params;
    TdcaBlock block;
    block.build("blk", 12, cfg, AttnTopology::kTriplet, params, rng);
    params.set_trainable([](const std::string&) { return true; });
    Tensor x = Tensor::randn({5, 12}, rng);
    ConditioningBundle b = random_bundle(cfg, rng, 0.8, 1.1);

    std::vector<Scalar> proj;
    Rng prng(11);
    for (int i = 0; i < 60; ++i) proj.push_back(prng.normal());
    auto loss = [&] { return dot_const(block.forward(x, b), proj); };

    pstf_test::GradCheck gc;
    Rng pick(12);
    int checked = 0;
    for (int trial = 0; trial < 12; ++trial) {
        auto& entry = params.at(pick.uniform_index(params.size()));
        const int64_t idx = (int64_t)pick.uniform_index((uint64_t)entry.tensor.numel());
        params.zero_grads();
        CHECK(gc.max_rel_err(loss, entry.tensor, {idx}) < 1e-3);
        ++checked;
    }
    CHECK(checked >= 10);
}
