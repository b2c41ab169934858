#include "diffusion/schedule.hpp"

#include <string>

#include "core/error.hpp"

namespace steerlab {

double NoiseSchedule::alpha_bar(int t) const {
    if (t < 0 || t > timesteps)
        throw ContractError("alpha_bar: timestep " + std::to_string(t) +
                            " outside [0," + std::to_string(timesteps) + "]");
    return alpha_bars[size_t(t)];
}

NoiseSchedule make_linear_schedule(int timesteps, double beta_start,
                                   double beta_end) {
    // beta_start == beta_end (a constant schedule) is allowed; it is useful
    // for closed-form checks even though the production schedule is strictly
    // increasing.
    if (timesteps < 1)
        throw ConfigError("schedule: timesteps must be >= 1");
    if (!(beta_start > 0.0) || !(beta_end < 1.0) || beta_start > beta_end)
        throw ConfigError("schedule: need 0 < beta_start <= beta_end < 1, got " +
                          std::to_string(beta_start) + ", " +
                          std::to_string(beta_end));
    NoiseSchedule s;
    s.timesteps = timesteps;
    s.betas.resize(size_t(timesteps));
    s.alpha_bars.resize(size_t(timesteps) + 1);
    s.alpha_bars[0] = 1.0;
    for (int i = 0; i < timesteps; i++) {
        double beta =
            timesteps == 1
                ? beta_start
                : beta_start + (beta_end - beta_start) * double(i) /
                                   double(timesteps - 1);
        s.betas[size_t(i)] = beta;
        s.alpha_bars[size_t(i) + 1] = s.alpha_bars[size_t(i)] * (1.0 - beta);
    }
    return s;
}

}  // namespace steerlab
