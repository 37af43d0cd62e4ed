#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>

#include "pstf/core/rng.hpp"
#include "pstf/latent/latent.hpp"

using namespace pstf;

namespace {

WPlusLatent random_latent(int nl, int dl, Rng& rng) {
    WPlusLatent w(nl, dl);
    for (auto& v : w.mat.data()) v = rng.normal();
    return w;
}

AttributeDirection random_direction(int nl, int dl, Rng& rng, const std::string& id) {
    WPlusLatent g = random_latent(nl, dl, rng);
    std::vector<WPlusLatent> unedited{random_latent(nl, dl, rng)};
    std::vector<WPlusLatent> edited{unedited[0]};
    for (size_t i = 0; i < g.mat.data().size(); ++i)
        edited[0].mat.data()[i] += g.mat.data()[i];
    AttributeDirection d = extract_direction(edited, unedited, id);
    return d;
}

}  // namespace

TEST_CASE("apply_edit zero strength is bit-identical") {
    Rng rng(1);
    WPlusLatent w = random_latent(6, 64, rng);
    AttributeDirection d = random_direction(6, 64, rng, "a");
    WPlusLatent out = apply_edit(w, d, 0.0);
    CHECK(out.mat.data() == w.mat.data());
}

TEST_CASE("apply_edit is affine in alpha") {
    Rng rng(2);
    WPlusLatent w = random_latent(6, 64, rng);
    AttributeDirection d = random_direction(6, 64, rng, "a");
    const double a = 0.7, b = 1.4;
    WPlusLatent two_step = apply_edit(apply_edit(w, d, a), d, b);
    WPlusLatent one_step = apply_edit(w, d, a + b);
    for (size_t i = 0; i < w.mat.data().size(); ++i)
        CHECK(std::abs(two_step.mat.data()[i] - one_step.mat.data()[i]) < 1e-9);
}

TEST_CASE("apply_edit rejects shape mismatch") {
    Rng rng(3);
    WPlusLatent w = random_latent(6, 64, rng);
    AttributeDirection d = random_direction(4, 64, rng, "a");
    CHECK_THROWS_AS(apply_edit(w, d, 1.0), ConfigError);
}

TEST_CASE("extract_direction constant offset") {
    Rng rng(4);
    const int nl = 6, dl = 64;
    WPlusLatent g = random_latent(nl, dl, rng);
    double gnorm = g.frobenius_norm();
    std::vector<WPlusLatent> unedited, edited;
    for (int i = 0; i < 10; ++i) {
        unedited.push_back(random_latent(nl, dl, rng));
        edited.push_back(unedited.back());
        for (size_t k = 0; k < g.mat.data().size(); ++k)
            edited.back().mat.data()[k] += g.mat.data()[k];
    }
    AttributeDirection d = extract_direction(edited, unedited);
    CHECK(d.calibration_scale == doctest::Approx(gnorm).epsilon(1e-9));
    for (size_t k = 0; k < g.mat.data().size(); ++k)
        CHECK(d.delta.data()[k] == doctest::Approx(g.mat.data()[k] / gnorm).epsilon(1e-9));
    CHECK(latent_cosine(d.delta, g.mat) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("extract_direction error paths") {
    Rng rng(5);
    std::vector<WPlusLatent> none;
    CHECK_THROWS_AS(extract_direction(none, none), UsageError);
    std::vector<WPlusLatent> same{random_latent(6, 64, rng)};
    CHECK_THROWS_AS(extract_direction(same, same), DegenerateDirectionError);
}

TEST_CASE("extract_direction is invariant to pair order") {
    Rng rng(6);
    const int n = 20;
    std::vector<WPlusLatent> unedited, edited;
    for (int i = 0; i < n; ++i) {
        unedited.push_back(random_latent(6, 64, rng));
        edited.push_back(random_latent(6, 64, rng));
    }
    AttributeDirection d1 = extract_direction(edited, unedited);
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[(size_t)i] = i;
    rng.shuffle(perm);
    std::vector<WPlusLatent> pu, pe;
    for (int i : perm) {
        pu.push_back(unedited[(size_t)i]);
        pe.push_back(edited[(size_t)i]);
    }
    AttributeDirection d2 = extract_direction(pe, pu);
    for (size_t k = 0; k < d1.delta.data().size(); ++k)
        CHECK(std::abs(d1.delta.data()[k] - d2.delta.data()[k]) < 1e-12);
}

TEST_CASE("stored directions are unit Frobenius norm") {
    Rng rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        AttributeDirection d = random_direction(6, 64, rng, "x");
        double n = 0;
        for (double v : d.delta.data()) n += v * v;
        CHECK(std::abs(std::sqrt(n) - 1.0) < 1e-9);
    }
}

TEST_CASE("sweep basics") {
    Rng rng(8);
    WPlusLatent w = random_latent(6, 64, rng);
    AttributeDirection d = random_direction(6, 64, rng, "a");

    auto single = sweep(w, d, {0.0});
    REQUIRE(single.size() == 1);
    CHECK(single[0].mat.data() == w.mat.data());

    std::vector<double> alphas;
    for (int i = 0; i < 14; ++i) alphas.push_back(0.2 * i);
    auto latents = sweep(w, d, alphas);
    REQUIRE(latents.size() == 14);
    // consecutive differences all equal (affine sequence)
    for (size_t i = 2; i < latents.size(); ++i)
        for (size_t k = 0; k < w.mat.data().size(); ++k) {
            const double d1 = latents[i].mat.data()[k] - latents[i - 1].mat.data()[k];
            const double d0 = latents[1].mat.data()[k] - latents[0].mat.data()[k];
            CHECK(std::abs(d1 - d0) < 1e-9);
        }
}

TEST_CASE("bank lookup, duplicates, and file round-trip") {
    Rng rng(9);
    DirectionBank bank;
    bank.add(random_direction(6, 64, rng, "smile"));
    bank.add(random_direction(6, 64, rng, "pose"));
    CHECK_THROWS_AS(bank.add(random_direction(6, 64, rng, "smile")), UsageError);
    CHECK_THROWS_WITH_AS(bank.by_name("nope"),
                         doctest::Contains("bank contains: smile pose"), UsageError);

    const std::string path = "/tmp/pstf_test_bank.bin";
    save_bank(bank, path);
    DirectionBank loaded = load_bank(path);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded.attribute_names() == bank.attribute_names());
    // f32 storage: values match to float precision, norms stay unit-ish
    for (size_t i = 0; i < bank.directions.size(); ++i) {
        CHECK(latent_cosine(loaded.directions[i].delta, bank.directions[i].delta) >
              1.0 - 1e-9);
        CHECK(loaded.directions[i].calibration_scale ==
              doctest::Approx(bank.directions[i].calibration_scale).epsilon(1e-6));
    }
    std::remove(path.c_str());
}

TEST_CASE("paper attribute name list has the 14 categories") {
    CHECK(paper_attribute_names().size() == 14);
    CHECK(paper_attribute_names()[0] == "smile");
    CHECK(paper_attribute_names()[5] == "eyeglasses");
}
