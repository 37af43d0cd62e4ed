#ifndef PSTF_MODEL_SCHEDULE_HPP
#define PSTF_MODEL_SCHEDULE_HPP

#include <vector>

#include "pstf/core/rng.hpp"
#include "pstf/core/tensor.hpp"

namespace pstf {

// Linear beta schedule with cached cumulative products. alpha_bar(-1) is 1 by
// convention: stepping to t_prev = -1 lands on the clean image.
struct NoiseSchedule {
    std::vector<double> betas;
    std::vector<double> alphas;
    std::vector<double> alpha_bars;

    NoiseSchedule(int timesteps, double beta_min, double beta_max);

    int timesteps() const { return (int)betas.size(); }
    double alpha_bar(int t) const;  // accepts -1

    void check_t(int t, const char* op) const;
};

// sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
Tensor add_noise(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& ns);

// (x_t - sqrt(1 - abar_t) eps_hat) / sqrt(abar_t)
Tensor ddim_x0_approx(const Tensor& x_t, int t, const Tensor& noise_est,
                      const NoiseSchedule& ns);

// One DDIM update t -> t_prev (t_prev in [-1, t)). eta=0 is deterministic;
// eta>0 draws the stochastic part from rng.
Tensor ddim_step(const Tensor& x_t, int t, int t_prev, const Tensor& noise_est,
                 const NoiseSchedule& ns, double eta = 0.0, Rng* rng = nullptr);

// uncond + scale * (cond - uncond)
Tensor cfg_combine(const Tensor& cond_est, const Tensor& uncond_est, double scale);

// The inference-time subsequence: `steps` indices from T-1 down to 0.
std::vector<int> sampling_timesteps(int train_timesteps, int steps);

}  // namespace pstf

#endif  // PSTF_MODEL_SCHEDULE_HPP
