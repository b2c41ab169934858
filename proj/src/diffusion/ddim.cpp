#include "diffusion/ddim.hpp"

#include <cmath>
#include <cstring>

#include "core/error.hpp"
#include "core/ops.hpp"

namespace steerlab {
namespace {

void check_finite(const Tensor& x, const char* what, int step_t) {
    if (!ops::all_finite(x))
        throw NumericError(std::string(what) +
                           ": non-finite values at timestep " +
                           std::to_string(step_t));
}

}  // namespace

std::vector<int> timestep_grid(int timesteps, int steps) {
    if (steps < 1 || steps > timesteps)
        throw ConfigError("timestep_grid: steps must be in [1, T], got " +
                          std::to_string(steps) + " of " +
                          std::to_string(timesteps));
    std::vector<int> grid;
    grid.reserve(size_t(steps));
    for (int i = 0; i < steps; i++) {
        double pos = steps == 1
                         ? double(timesteps)
                         : 1.0 + (double(timesteps) - 1.0) * double(i) /
                                     double(steps - 1);
        int t = int(std::lround(pos));
        if (grid.empty() || grid.back() != t) grid.push_back(t);
    }
    return grid;
}

Tensor q_sample(const Tensor& x0, int t, const Tensor& eps,
                const NoiseSchedule& sched) {
    if (eps.shape() != x0.shape())
        throw ContractError("q_sample: eps shape " + shape_str(eps.shape()) +
                            " does not match x0 " + shape_str(x0.shape()));
    double ab = sched.alpha_bar(t);  // throws index error when t out of range
    double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
    Tensor y = Tensor::zeros(x0.shape());
    const float* xd = x0.data();
    const float* ed = eps.data();
    float* yd = y.data();
    int64_t n = x0.numel();
    for (int64_t i = 0; i < n; i++)
        yd[i] = float(a * double(xd[i]) + b * double(ed[i]));
    return y;
}

Tensor epsilon_loss(EpsModel& model, const Tensor& x0_batch,
                    const Tensor& c_batch, Rng& rng,
                    const NoiseSchedule& sched) {
    int t = rng.uniform_int(1, sched.timesteps);
    Tensor eps = Tensor::zeros(x0_batch.shape());
    rng.fill_normal(eps.data(), size_t(eps.numel()));
    Tensor x_t = q_sample(x0_batch, t, eps, sched);
    Tensor eps_hat = model.eps(x_t, t, c_batch);
    if (eps_hat.shape() != x0_batch.shape())
        throw ContractError("epsilon_loss: model output " +
                            shape_str(eps_hat.shape()) + " does not match x0 " +
                            shape_str(x0_batch.shape()));
    Tensor loss = ops::mse(eps_hat, eps);
    if (!std::isfinite(loss.item()))
        throw NumericError("epsilon_loss: non-finite loss at t=" +
                           std::to_string(t));
    return loss;
}

Tensor ddim_step(const Tensor& x_t, const Tensor& eps_hat, int t, int t_prev,
                 const NoiseSchedule& sched) {
    if (t_prev >= t || t_prev < 0)
        throw ContractError("ddim_step: need t > t_prev >= 0, got t=" +
                            std::to_string(t) +
                            " t_prev=" + std::to_string(t_prev));
    if (eps_hat.shape() != x_t.shape())
        throw ContractError("ddim_step: eps shape mismatch");
    double ab_t = sched.alpha_bar(t);
    double ab_p = sched.alpha_bar(t_prev);
    if (ab_t <= 0.0)
        throw NumericError("ddim_step: alpha_bar vanished at t=" +
                           std::to_string(t));
    double sa_t = std::sqrt(ab_t), sb_t = std::sqrt(1.0 - ab_t);
    double sa_p = std::sqrt(ab_p), sb_p = std::sqrt(1.0 - ab_p);
    Tensor y = Tensor::zeros(x_t.shape());
    const float* xd = x_t.data();
    const float* ed = eps_hat.data();
    float* yd = y.data();
    int64_t n = x_t.numel();
    for (int64_t i = 0; i < n; i++) {
        double x0 = (double(xd[i]) - sb_t * double(ed[i])) / sa_t;
        yd[i] = float(sa_p * x0 + sb_p * double(ed[i]));
    }
    return y;
}

namespace {

// Inverse of ddim_step: maps the estimate at t_lo to t_hi using eps_hat.
Tensor ddim_step_up(const Tensor& x_lo, const Tensor& eps_hat, int t_lo,
                    int t_hi, const NoiseSchedule& sched) {
    double ab_lo = sched.alpha_bar(t_lo);
    double ab_hi = sched.alpha_bar(t_hi);
    double sa_lo = std::sqrt(ab_lo), sb_lo = std::sqrt(1.0 - ab_lo);
    double sa_hi = std::sqrt(ab_hi), sb_hi = std::sqrt(1.0 - ab_hi);
    Tensor y = Tensor::zeros(x_lo.shape());
    const float* xd = x_lo.data();
    const float* ed = eps_hat.data();
    float* yd = y.data();
    int64_t n = x_lo.numel();
    for (int64_t i = 0; i < n; i++) {
        double x0 = (double(xd[i]) - sb_lo * double(ed[i])) / sa_lo;
        yd[i] = float(sa_hi * x0 + sb_hi * double(ed[i]));
    }
    return y;
}

// One guided noise prediction. Batches cond and uncond into a single model
// call when guidance != 1 so the backbone runs once.
Tensor guided_eps(EpsModel& model, const Tensor& x, int t, const Tensor& c,
                  const Tensor& c_null, double w) {
    if (w == 1.0) return model.eps(x, t, c);
    if (!c_null.defined())
        throw ContractError("guided_eps: guidance != 1 requires a null condition");
    int bsz = x.dim(0);
    Tensor x2 = Tensor::zeros({2 * bsz, x.dim(1), x.dim(2), x.dim(3)});
    size_t half = size_t(x.numel());
    std::memcpy(x2.data(), x.data(), half * sizeof(float));
    std::memcpy(x2.data() + half, x.data(), half * sizeof(float));
    int cd = c.rank() == 2 ? c.dim(1) : c.dim(0);
    Tensor c2 = Tensor::zeros({2 * bsz, cd});
    for (int r = 0; r < bsz; r++) {
        const float* src =
            c.rank() == 2 ? c.data() + size_t(r) * cd : c.data();
        std::memcpy(c2.data() + size_t(r) * cd, src, size_t(cd) * sizeof(float));
    }
    for (int r = 0; r < bsz; r++)
        std::memcpy(c2.data() + size_t(bsz + r) * cd, c_null.data(),
                    size_t(cd) * sizeof(float));
    Tensor e2 = model.eps(x2, t, c2);
    Tensor out = Tensor::zeros(x.shape());
    const float* ec = e2.data();
    const float* eu = e2.data() + half;
    float* od = out.data();
    for (size_t i = 0; i < half; i++)
        od[i] = float(double(eu[i]) + w * (double(ec[i]) - double(eu[i])));
    return out;
}

}  // namespace

SampleResult ddim_sample(EpsModel& model, const Tensor& c, const Tensor& c_null,
                         const SamplerConfig& cfg, const Tensor& z_terminal,
                         const NoiseSchedule& sched) {
    if (cfg.eta != 0.0)
        throw ConfigError("ddim_sample: eta must be 0 (deterministic sampler)");
    std::vector<int> grid = timestep_grid(sched.timesteps, cfg.steps);
    SampleResult res;
    res.z_terminal = z_terminal;
    res.grid = grid;
    Tensor x = z_terminal;
    for (size_t i = grid.size(); i-- > 0;) {
        int t = grid[i];
        int t_prev = i == 0 ? 0 : grid[i - 1];
        Tensor eps_hat = guided_eps(model, x, t, c, c_null, cfg.guidance);
        check_finite(eps_hat, "ddim_sample: noise prediction", t);
        x = ddim_step(x, eps_hat, t, t_prev, sched);
        check_finite(x, "ddim_sample: latent", t_prev);
    }
    res.image = x;
    return res;
}

Tensor ddim_invert(EpsModel& model, const Tensor& x0, const Tensor& c,
                   const SamplerConfig& cfg, const NoiseSchedule& sched) {
    if (cfg.guidance != 1.0)
        throw ContractError("ddim_invert: inversion runs without guidance "
                            "(guidance must be 1)");
    std::vector<int> grid = timestep_grid(sched.timesteps, cfg.steps);
    Tensor x = x0;
    for (size_t i = 0; i < grid.size(); i++) {
        int t_lo = i == 0 ? 0 : grid[i - 1];
        int t_hi = grid[i];
        Tensor eps_hat = model.eps(x, t_hi, c);
        check_finite(eps_hat, "ddim_invert: noise prediction", t_hi);
        x = ddim_step_up(x, eps_hat, t_lo, t_hi, sched);
        check_finite(x, "ddim_invert: latent", t_hi);
    }
    return x;
}

}  // namespace steerlab
