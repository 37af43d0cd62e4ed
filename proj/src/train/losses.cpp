#include "pstf/train/losses.hpp"

#include "pstf/core/ops.hpp"

namespace pstf {

Tensor diffusion_loss(const Tensor& eps, const Tensor& eps_pred) {
    return mse(eps, eps_pred);
}

Tensor identity_loss(const Tensor& x_t, int t, const Tensor& noise_est,
                     const Tensor& original_image, const IdentityProbe& probe,
                     const NoiseSchedule& ns) {
    Tensor x0_hat = clamp01(ddim_x0_approx(x_t, t, noise_est, ns));
    Tensor e_gen = probe.embed_tensor(x0_hat);
    Tensor e_ref;
    {
        NoGradGuard ng;
        e_ref = probe.embed_tensor(original_image);
    }
    Tensor d = sub(e_gen, e_ref);
    return sum_all(mul(d, d));
}

SampleLoss sample_loss(PstfModel& model, const NoiseSchedule& ns, const IdentityProbe& probe,
                       const TrainingSample& sample, const ConditioningBundle& bundle,
                       const Tensor& heatmap, int t, const Tensor& eps, double lambda_id,
                       int id_loss_t_min) {
    Tensor x0 = sample.image.to_tensor();
    Tensor x_t = add_noise(x0, t, eps, ns);
    Tensor eps_pred = model.predict_noise(x_t, t, bundle, heatmap);

    SampleLoss out;
    Tensor ld = diffusion_loss(eps, eps_pred);
    out.diffusion = ld.item();
    out.total = ld;
    if (lambda_id > 0.0 && t >= id_loss_t_min) {
        Tensor li = identity_loss(x_t, t, eps_pred, sample.original_image().to_tensor(), probe,
                                  ns);
        out.identity = li.item();
        out.total = add(ld, scale(li, lambda_id));
    }
    return out;
}

}  // namespace pstf
