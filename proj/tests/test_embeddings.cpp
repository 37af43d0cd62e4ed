#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pstf/core/ops.hpp"
#include "pstf/model/model.hpp"

using namespace pstf;

namespace {

PstfModel make_model() {
    WorldConfig wc;
    wc.image_size = 8;
    wc.n_layers = 3;
    wc.d_latent = 12;
    wc.d_id = 8;
    ModelConfig mc;
    mc.d_ctx = 8;
    mc.d_model = 16;
    mc.n_heads = 2;
    mc.id_tokens = 2;
    mc.channels = {8, 12, 16};
    mc.gn_groups = 4;
    mc.time_embed_dim = 16;
    PstfModel m;
    m.build(wc, mc, 21);
    return m;
}

}  // namespace

TEST_CASE("encode_text: determinism, distinctness, null template, errors") {
    PstfModel m = make_model();
    Tensor a = m.text.encode(1);
    Tensor b = m.text.encode(1);
    CHECK(a.data() == b.data());

    Tensor c = m.text.encode(2);
    CHECK(a.data() != c.data());

    // null prompt: the reserved token sequence for the CFG branch
    Tensor null_seq = m.text.encode(kNullTemplateId);
    REQUIRE(null_seq.dim(0) == 1);
    for (int j = 0; j < null_seq.dim(1); ++j)
        CHECK(null_seq.ptr()[j] == m.text.table.ptr()[j]);  // row 0 of the table

    CHECK_THROWS_AS(m.text.encode(99), UsageError);
    CHECK_THROWS_AS(m.text.template_id("no such prompt"), UsageError);
    CHECK(m.text.template_id("") == kNullTemplateId);
    CHECK(m.text.template_id("a person") == 1);
}

TEST_CASE("project_identity: determinism and operator-norm bound") {
    PstfModel m = make_model();
    Rng rng(1);
    FaceEmbedding f;
    f.v.assign(8, 0.0);
    for (auto& v : f.v) v = rng.normal();
    f.normalize();

    Tensor t1 = m.id_proj.project(f);
    Tensor t2 = m.id_proj.project(f);
    CHECK(t1.data() == t2.data());
    REQUIRE(t1.shape() == Shape{2, 8});

    // bias is zero at init, so ||tokens||_F <= sigma_max * ||f||
    const double opnorm = m.id_proj.operator_norm();
    double tn = 0.0;
    for (double v : t1.data()) tn += v * v;
    CHECK(std::sqrt(tn) <= opnorm * 1.0 + 1e-9);
}

TEST_CASE("project_attributes: linearity and bias-only at zero") {
    PstfModel m = make_model();
    Rng rng(2);
    WPlusLatent w(3, 12);
    for (auto& v : w.mat.data()) v = rng.normal();
    Tensor delta = Tensor::randn({3, 12}, rng);

    Tensor base = m.attr_proj.project(w);
    const double alpha = 1.7;
    WPlusLatent shifted(3, 12);
    for (size_t i = 0; i < w.mat.data().size(); ++i)
        shifted.mat.data()[i] = w.mat.data()[i] + alpha * delta.data()[i];
    Tensor moved = m.attr_proj.project(shifted);
    Tensor dproj = m.attr_proj.project_delta(delta);
    for (int64_t i = 0; i < base.numel(); ++i)
        CHECK(moved.ptr()[i] - base.ptr()[i] ==
              doctest::Approx(alpha * dproj.ptr()[i]).epsilon(1e-9));

    // set biases to something visible, then project the zero latent
    for (int l = 0; l < 3; ++l)
        for (int j = 0; j < 8; ++j) m.attr_proj.b[(size_t)l].data()[(size_t)j] = l + 0.5;
    WPlusLatent zero(3, 12);
    Tensor bias_only = m.attr_proj.project(zero);
    for (int l = 0; l < 3; ++l)
        for (int j = 0; j < 8; ++j)
            CHECK(bias_only.ptr()[(size_t)l * 8 + j] == doctest::Approx(l + 0.5));

    WPlusLatent bad(4, 12);
    CHECK_THROWS_AS(m.attr_proj.project(bad), ConfigError);
}

TEST_CASE("freeze audit lists exactly the adapter parameters") {
    PstfModel m = make_model();
    m.set_train_mode("paper_faithful");
    auto names = m.trainable_parameter_names();
    CHECK(!names.empty());
    for (const auto& n : names) {
        const bool is_attr_proj = n.rfind("emb.attr_proj.", 0) == 0;
        const bool is_attr_kv = n.find(".attr_k.") != std::string::npos ||
                                n.find(".attr_v.") != std::string::npos;
        CHECK((is_attr_proj || is_attr_kv));
    }
    // every adapter parameter is present, none missing
    size_t expected = 0;
    for (size_t i = 0; i < m.params.size(); ++i)
        if (PstfModel::adapter_param(m.params.at(i).name)) ++expected;
    CHECK(names.size() == expected);

    m.set_train_mode("full");
    CHECK(m.trainable_parameter_names().size() == m.params.size());
    CHECK_THROWS_AS(m.set_train_mode("half"), UsageError);
}

TEST_CASE("concat-topology model trains concat projections in adapter mode") {
    WorldConfig wc;
    wc.image_size = 8;
    wc.n_layers = 3;
    wc.d_latent = 12;
    wc.d_id = 8;
    ModelConfig mc;
    mc.d_ctx = 8;
    mc.d_model = 16;
    mc.n_heads = 2;
    mc.id_tokens = 2;
    mc.channels = {8, 12, 16};
    mc.gn_groups = 4;
    mc.time_embed_dim = 16;
    PstfModel m;
    m.build(wc, mc, 21, AttnTopology::kConcat);
    m.set_train_mode("paper_faithful");
    bool saw_concat = false;
    for (const auto& n : m.trainable_parameter_names()) {
        const bool ok = n.rfind("emb.attr_proj.", 0) == 0 ||
                        n.find(".concat_k.") != std::string::npos ||
                        n.find(".concat_v.") != std::string::npos;
        CHECK(ok);
        saw_concat = saw_concat || n.find(".concat_") != std::string::npos;
    }
    CHECK(saw_concat);
}

TEST_CASE("ablation pair shares every non-adapter weight at init") {
    WorldConfig wc;
    wc.image_size = 8;
    wc.n_layers = 3;
    wc.d_latent = 12;
    wc.d_id = 8;
    ModelConfig mc;
    mc.d_ctx = 8;
    mc.d_model = 16;
    mc.n_heads = 2;
    mc.id_tokens = 2;
    mc.channels = {8, 12, 16};
    mc.gn_groups = 4;
    mc.time_embed_dim = 16;
    PstfModel a, b;
    a.build(wc, mc, 55, AttnTopology::kTriplet);
    b.build(wc, mc, 55, AttnTopology::kConcat);
    size_t shared = 0;
    for (size_t i = 0; i < a.params.size(); ++i) {
        const auto& e = a.params.at(i);
        if (b.params.has(e.name)) {
            CHECK(b.params.get(e.name).data() == e.tensor.data());
            ++shared;
        }
    }
    CHECK(shared > 0);
    // the concat projections start from the triplet model's identity path
    CHECK(b.params.get("unet.mid.attn.concat_k.w").data() ==
          a.params.get("unet.mid.attn.id_k.w").data());
}
