#ifndef PSTF_TRAIN_LOSSES_HPP
#define PSTF_TRAIN_LOSSES_HPP

#include "pstf/model/model.hpp"
#include "pstf/model/schedule.hpp"
#include "pstf/train/dataset.hpp"

namespace pstf {

// Plain eps-prediction MSE.
Tensor diffusion_loss(const Tensor& eps, const Tensor& eps_pred);

// Squared L2 between recognition embeddings of the DDIM clean-image
// approximation (clamped to [0,1]) and of the original image. The original's
// embedding is a constant; gradients flow through noise_est only.
Tensor identity_loss(const Tensor& x_t, int t, const Tensor& noise_est,
                     const Tensor& original_image, const IdentityProbe& probe,
                     const NoiseSchedule& ns);

// One sample's contribution to the step loss.
struct SampleLoss {
    Tensor total;       // diffusion + lambda_id * identity
    double diffusion = 0.0;
    double identity = 0.0;
};

SampleLoss sample_loss(PstfModel& model, const NoiseSchedule& ns, const IdentityProbe& probe,
                       const TrainingSample& sample, const ConditioningBundle& bundle,
                       const Tensor& heatmap, int t, const Tensor& eps, double lambda_id,
                       int id_loss_t_min);

}  // namespace pstf

#endif  // PSTF_TRAIN_LOSSES_HPP
