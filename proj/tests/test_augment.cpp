#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pstf/train/augment.hpp"

using namespace pstf;

namespace {

WorldConfig small_cfg() {
    WorldConfig cfg;
    cfg.image_size = 16;
    return cfg;
}

TrainingSample make_sample(const World& world, Rng& rng, int index) {
    TrainingSample s;
    s.index = index;
    s.theta = world.sample_dataset(rng);
    s.image = world.render(s.theta);
    s.landmarks = world.landmarks(s.theta);
    s.w = world.embed_latent(s.theta);
    s.f.v.assign(32, 0.0);
    s.f.v[(size_t)(index % 32)] = 1.0;
    s.template_id = 1;
    return s;
}

}  // namespace

TEST_CASE("rate 0 never augments") {
    World world(small_cfg(), 3);
    DirectionBank bank = world.analytic_bank();
    AugmentConfig cfg;
    cfg.rate = 0.0;
    Rng data_rng(1), aug_rng(2);
    for (int i = 0; i < 50; ++i) {
        TrainingSample s = make_sample(world, data_rng, i);
        TrainingSample out = maybe_augment(s, bank, cfg, world, aug_rng);
        CHECK_FALSE(out.provenance.augmented);
        CHECK(out.image.pixels == s.image.pixels);
        CHECK(out.w.mat.data() == s.w.mat.data());
        CHECK_FALSE(out.original.has_value());
    }
}

TEST_CASE("rate 1 with zero-strength edits leaves the tuple intact") {
    World world(small_cfg(), 3);
    DirectionBank bank = world.analytic_bank();
    AugmentConfig cfg;
    cfg.rate = 1.0;
    cfg.alpha_min = 0.0;
    cfg.alpha_max = 0.0;
    Rng data_rng(4), aug_rng(5);
    for (int i = 0; i < 10; ++i) {
        TrainingSample s = make_sample(world, data_rng, i);
        TrainingSample out = maybe_augment(s, bank, cfg, world, aug_rng);
        CHECK(out.provenance.augmented);
        CHECK(out.provenance.alpha == 0.0);
        CHECK(out.w.mat.data() == s.w.mat.data());
        CHECK(out.image.pixels == s.image.pixels);  // decode(W) reproduces the render
    }
}

TEST_CASE("augmentation edits exactly one attribute factor and keeps F/L") {
    World world(small_cfg(), 3);
    DirectionBank bank = world.analytic_bank();
    AugmentConfig cfg;
    cfg.rate = 1.0;
    Rng data_rng(6), aug_rng(7);
    for (int i = 0; i < 40; ++i) {
        TrainingSample s = make_sample(world, data_rng, i);
        TrainingSample out = maybe_augment(s, bank, cfg, world, aug_rng);
        REQUIRE(out.provenance.augmented);
        CHECK(out.provenance.alpha >= cfg.alpha_min);
        CHECK(out.provenance.alpha <= cfg.alpha_max);
        const int k = bank.index_of(out.provenance.attribute);
        REQUIRE(k >= 0);

        // F and L are the original's, bit for bit
        CHECK(out.f.v == s.f.v);
        for (int p = 0; p < LandmarkSet::kCount; ++p) {
            CHECK(out.landmarks.points[(size_t)p][0] == s.landmarks.points[(size_t)p][0]);
            CHECK(out.landmarks.points[(size_t)p][1] == s.landmarks.points[(size_t)p][1]);
        }
        REQUIRE(out.original.has_value());
        CHECK(out.original->pixels == s.image.pixels);

        // the latent moved along exactly one ground-truth factor
        WorldParams rec = world.recover_factors(out.w);
        for (int j = 0; j < WorldParams::kAttributeFactors; ++j) {
            const double expect =
                s.theta.attribute[(size_t)j] + (j == k ? out.provenance.alpha : 0.0);
            CHECK(std::abs(rec.attribute[(size_t)j] - expect) < 1e-6);
        }
        for (int j = 0; j < WorldParams::kIdentityFactors; ++j)
            CHECK(std::abs(rec.identity[(size_t)j] - s.theta.identity[(size_t)j]) < 1e-6);
    }
}

TEST_CASE("empirical augmentation rate matches the configured probability") {
    World world(small_cfg(), 3);
    DirectionBank bank = world.analytic_bank();
    AugmentConfig cfg;  // rate 0.3 default
    Rng data_rng(8);
    TrainingSample s = make_sample(world, data_rng, 0);
    int hits = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        Rng aug_rng(Rng::mix(99, (uint64_t)i));
        // decode only when augmented; skip the expensive render by alpha=0
        AugmentConfig fast = cfg;
        fast.alpha_min = fast.alpha_max = 0.0;
        if (maybe_augment(s, bank, fast, world, aug_rng).provenance.augmented) ++hits;
    }
    const double rate = (double)hits / n;
    CHECK(rate > 0.28);
    CHECK(rate < 0.32);
}

TEST_CASE("augmentation is reproducible from (seed, index)") {
    World world(small_cfg(), 3);
    DirectionBank bank = world.analytic_bank();
    AugmentConfig cfg;
    cfg.rate = 0.5;
    Rng data_rng(9);
    TrainingSample s = make_sample(world, data_rng, 0);
    for (uint64_t idx : {0ULL, 17ULL, 4242ULL}) {
        Rng r1(Rng::mix(7, idx)), r2(Rng::mix(7, idx));
        TrainingSample a = maybe_augment(s, bank, cfg, world, r1);
        TrainingSample b = maybe_augment(s, bank, cfg, world, r2);
        CHECK(a.provenance.augmented == b.provenance.augmented);
        CHECK(a.provenance.attribute == b.provenance.attribute);
        CHECK(a.provenance.alpha == b.provenance.alpha);
        CHECK(a.image.pixels == b.image.pixels);
    }
}

TEST_CASE("eligible-attribute filter restricts the choice and rejects unknowns") {
    World world(small_cfg(), 3);
    DirectionBank bank = world.analytic_bank();
    AugmentConfig cfg;
    cfg.rate = 1.0;
    cfg.eligible_attributes = {"smile", "glasses"};
    Rng data_rng(10), aug_rng(11);
    TrainingSample s = make_sample(world, data_rng, 0);
    for (int i = 0; i < 30; ++i) {
        TrainingSample out = maybe_augment(s, bank, cfg, world, aug_rng);
        CHECK((out.provenance.attribute == "smile" || out.provenance.attribute == "glasses"));
    }
    cfg.eligible_attributes = {"beard"};
    CHECK_THROWS_AS(maybe_augment(s, bank, cfg, world, aug_rng), UsageError);
}
