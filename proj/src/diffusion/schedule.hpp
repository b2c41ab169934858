#pragma once
#include <vector>

namespace steerlab {

// Forward-process coefficients. Kept at f64: the terminal cumulative product
// for the default 1000-step schedule is ~4e-5 and would lose most of its
// precision in f32.
struct NoiseSchedule {
    int timesteps = 0;                // T
    std::vector<double> betas;        // betas[i] is beta for timestep i+1
    std::vector<double> alpha_bars;   // length T+1, alpha_bars[0] == 1

    double alpha_bar(int t) const;    // t in [0, T], checked
};

NoiseSchedule make_linear_schedule(int timesteps, double beta_start,
                                   double beta_end);

}  // namespace steerlab
