#include "pstf/model/schedule.hpp"

#include <cmath>

#include "pstf/core/errors.hpp"
#include "pstf/core/ops.hpp"

namespace pstf {

NoiseSchedule::NoiseSchedule(int timesteps, double beta_min, double beta_max) {
    if (timesteps < 2) throw ConfigError("NoiseSchedule: need at least 2 timesteps");
    if (!(beta_min > 0.0 && beta_max < 1.0 && beta_min <= beta_max))
        throw ConfigError("NoiseSchedule: betas must satisfy 0 < min <= max < 1");
    betas.resize((size_t)timesteps);
    alphas.resize((size_t)timesteps);
    alpha_bars.resize((size_t)timesteps);
    double bar = 1.0;
    for (int t = 0; t < timesteps; ++t) {
        betas[(size_t)t] = beta_min + (beta_max - beta_min) * t / (double)(timesteps - 1);
        alphas[(size_t)t] = 1.0 - betas[(size_t)t];
        bar *= alphas[(size_t)t];
        alpha_bars[(size_t)t] = bar;
    }
}

double NoiseSchedule::alpha_bar(int t) const {
    if (t == -1) return 1.0;
    check_t(t, "alpha_bar");
    return alpha_bars[(size_t)t];
}

void NoiseSchedule::check_t(int t, const char* op) const {
    if (t < 0 || t >= timesteps())
        throw ConfigError(std::string(op) + ": timestep " + std::to_string(t) +
                          " outside [0," + std::to_string(timesteps()) + ")");
}

Tensor add_noise(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& ns) {
    ns.check_t(t, "add_noise");
    const double ab = ns.alpha_bar(t);
    return lincomb(x0, std::sqrt(ab), eps, std::sqrt(1.0 - ab));
}

Tensor ddim_x0_approx(const Tensor& x_t, int t, const Tensor& noise_est,
                      const NoiseSchedule& ns) {
    ns.check_t(t, "ddim_x0_approx");
    const double ab = ns.alpha_bar(t);
    const double inv = 1.0 / std::sqrt(ab);
    return lincomb(x_t, inv, noise_est, -std::sqrt(1.0 - ab) * inv);
}

Tensor ddim_step(const Tensor& x_t, int t, int t_prev, const Tensor& noise_est,
                 const NoiseSchedule& ns, double eta, Rng* rng) {
    ns.check_t(t, "ddim_step");
    if (t_prev >= t || t_prev < -1)
        throw ConfigError("ddim_step: t_prev must lie in [-1, t)");
    const double ab_t = ns.alpha_bar(t);
    const double ab_p = ns.alpha_bar(t_prev);
    Tensor x0 = ddim_x0_approx(x_t, t, noise_est, ns);
    double sigma = 0.0;
    if (eta > 0.0)
        sigma = eta * std::sqrt((1.0 - ab_p) / (1.0 - ab_t)) *
                std::sqrt(1.0 - ab_t / ab_p);
    const double dir = std::sqrt(std::max(1.0 - ab_p - sigma * sigma, 0.0));
    Tensor out = lincomb(x0, std::sqrt(ab_p), noise_est, dir);
    if (sigma > 0.0) {
        if (!rng) throw ConfigError("ddim_step: eta > 0 requires an rng");
        Tensor z = Tensor::zeros(x_t.shape());
        for (auto& v : z.data()) v = rng->normal();
        out = lincomb(out, 1.0, z, sigma);
    }
    return out;
}

Tensor cfg_combine(const Tensor& cond_est, const Tensor& uncond_est, double scale) {
    return lincomb(uncond_est, 1.0 - scale, cond_est, scale);
}

std::vector<int> sampling_timesteps(int train_timesteps, int steps) {
    if (steps < 1) throw ConfigError("sampling_timesteps: steps must be >= 1");
    std::vector<int> ts;
    ts.reserve((size_t)steps);
    if (steps == 1) {
        ts.push_back(train_timesteps - 1);
        return ts;
    }
    for (int i = 0; i < steps; ++i) {
        const double f = (double)(steps - 1 - i) / (double)(steps - 1);
        int t = (int)std::lround(f * (train_timesteps - 1));
        if (!ts.empty() && t >= ts.back()) t = ts.back() - 1;  // strictly decreasing
        ts.push_back(std::max(t, 0));
    }
    return ts;
}

}  // namespace pstf
