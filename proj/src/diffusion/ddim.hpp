#pragma once
#include <vector>

#include "core/rng.hpp"
#include "core/tensor.hpp"
#include "diffusion/schedule.hpp"

namespace steerlab {

// Anything that predicts noise from (x_t, t, c). c is [B,cond_dim] or
// [cond_dim]; an undefined c means the unconditional branch.
struct EpsModel {
    virtual Tensor eps(const Tensor& x_t, int t, const Tensor& c) = 0;
    virtual ~EpsModel() = default;
};

struct SamplerConfig {
    int steps = 30;
    double guidance = 7.5;
    double eta = 0.0;  // deterministic sampling only; must stay 0
};

// Evenly spaced timesteps over [1, T], ascending, deduplicated
// (round(linspace)). Sampling walks it in reverse; inversion forward.
std::vector<int> timestep_grid(int timesteps, int steps);

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
Tensor q_sample(const Tensor& x0, int t, const Tensor& eps,
                const NoiseSchedule& sched);

// Epsilon-prediction MSE on one batch: a single t is drawn uniform in [1,T]
// (the denoiser takes a scalar timestep), per-sample noise is drawn from rng,
// and the mean squared error between prediction and drawn noise is returned.
Tensor epsilon_loss(EpsModel& model, const Tensor& x0_batch,
                    const Tensor& c_batch, Rng& rng,
                    const NoiseSchedule& sched);

// One deterministic update from t to t_prev (t > t_prev >= 0). Elementwise
// math at f64, stored back to f32.
Tensor ddim_step(const Tensor& x_t, const Tensor& eps_hat, int t, int t_prev,
                 const NoiseSchedule& sched);

struct SampleResult {
    Tensor image;
    Tensor z_terminal;       // the supplied starting latent, kept for metrics
    std::vector<int> grid;   // ascending timestep grid that was traversed
};

// Full DDIM trajectory from the supplied z_T. Classifier-free guidance with
// weight w = cfg.guidance: eps = eps_u + w (eps_c - eps_u); at w == 1 the
// unconditional branch is skipped entirely. c_null is the unconditional
// condition (zeros).
SampleResult ddim_sample(EpsModel& model, const Tensor& c, const Tensor& c_null,
                         const SamplerConfig& cfg, const Tensor& z_terminal,
                         const NoiseSchedule& sched);

// DDIM recursion run in reverse over the same grid, estimating the terminal
// latent of the trajectory that would generate x0. Requires guidance == 1
// (no CFG during inversion); the noise prediction at each hop is evaluated
// at the current (cleaner) estimate under the noisier timestep label.
Tensor ddim_invert(EpsModel& model, const Tensor& x0, const Tensor& c,
                   const SamplerConfig& cfg, const NoiseSchedule& sched);

}  // namespace steerlab
