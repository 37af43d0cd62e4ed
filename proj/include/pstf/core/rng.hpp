#ifndef PSTF_CORE_RNG_HPP
#define PSTF_CORE_RNG_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace pstf {

// xoshiro256++ with splitmix64 seeding. Self-contained so that streams are
// reproducible across standard libraries and serializable into checkpoints
// (std::normal_distribution is implementation-defined, so we roll our own).
class Rng {
public:
    Rng() : Rng(0x9e3779b97f4a7c15ULL) {}

    explicit Rng(uint64_t seed) { reseed(seed); }

    // Domain-separated stream: same seed, different tags -> independent streams.
    Rng(uint64_t seed, const std::string& tag) {
        uint64_t h = 1469598103934665603ULL;  // FNV-1a over the tag
        for (unsigned char c : tag) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        reseed(seed ^ h);
    }

    void reseed(uint64_t seed) {
        uint64_t x = seed;
        for (auto& si : s_) si = splitmix64(x);
        have_gauss_ = false;
        gauss_ = 0.0;
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0, 1).
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Integer in [0, n).
    uint64_t uniform_index(uint64_t n) { return next_u64() % n; }

    // Standard normal via Box-Muller; caches the second draw.
    double normal() {
        if (have_gauss_) {
            have_gauss_ = false;
            return gauss_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.28318530717958647692 * u2;
        gauss_ = r * std::sin(a);
        have_gauss_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = uniform_index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    // Serializable state: 4 words of xoshiro state + the cached gaussian.
    struct State {
        uint64_t s[4];
        uint8_t have_gauss;
        double gauss;
    };

    State state() const {
        State st;
        for (int i = 0; i < 4; ++i) st.s[i] = s_[i];
        st.have_gauss = have_gauss_ ? 1 : 0;
        st.gauss = gauss_;
        return st;
    }

    void set_state(const State& st) {
        for (int i = 0; i < 4; ++i) s_[i] = st.s[i];
        have_gauss_ = st.have_gauss != 0;
        gauss_ = st.gauss;
    }

    static uint64_t splitmix64(uint64_t& x) {
        uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Stable per-index derivation, used to shard augmentation RNG by sample
    // index so any sample is reproducible from (seed, index) alone.
    static uint64_t mix(uint64_t seed, uint64_t index) {
        uint64_t x = seed ^ (0x9e3779b97f4a7c15ULL * (index + 1));
        return splitmix64(x);
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t s_[4] = {1, 2, 3, 4};
    bool have_gauss_ = false;
    double gauss_ = 0.0;
};

}  // namespace pstf

#endif  // PSTF_CORE_RNG_HPP
