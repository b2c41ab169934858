#pragma once
#include <string>
#include <vector>

#include "core/checkpoint.hpp"
#include "core/rng.hpp"
#include "core/tensor.hpp"
#include "model/unet.hpp"

namespace steerlab {

struct SteeringConfig {
    int k = 16;
    std::vector<Placement> placement = {Placement::mid, Placement::up};
    double gate_center = 0.5;     // tau0
    double gate_steepness = 10.0; // kappa
};

std::vector<Placement> placement_set_from(const std::string& s);
std::string placement_set_name(const std::vector<Placement>& ps);

// Timestep gate f = sigmoid(kappa * (tau0 - t_frac)); t_frac runs 1 (pure
// noise, start of sampling) down to 0, so the gate opens toward the end.
double gate_value(double t_frac, double tau0, double kappa);

// Activation steering: a prompt code v = g(c) drives per-block zero-initialized
// gamma/beta projections applied to a fresh affine-free GroupNorm of the
// block output, scaled by a runtime scalar and the timestep gate.
class SteeringModule : public ActivationAdapter {
  public:
    SteeringModule(const SteeringConfig& cfg, const UNet& net, int timesteps,
                   Rng& rng);

    void set_scale(double s);
    double scale() const { return scale_; }

    Tensor encode_code(const Tensor& c);  // [B,k]

    void begin(const Tensor& x_t, int t, const Tensor& c) override;
    Tensor delta(const BlockDescriptor& block, const Tensor& h) override;

    NamedParams trainable_params();
    int64_t param_count() const;
    const SteeringConfig& config() const { return cfg_; }
    int timesteps() const { return timesteps_; }
    const std::vector<std::string>& steered_blocks() const { return block_ids_; }

    std::vector<CheckpointRecord> to_records();
    static SteeringModule from_records(const std::vector<CheckpointRecord>& recs);

  private:
    SteeringModule() = default;
    bool selected(Placement p) const;

    SteeringConfig cfg_;
    int timesteps_ = 0;
    int groups_ = 8;
    double scale_ = 1.0;
    Dense fc1_, fc2_;               // g: cond_dim -> 4k -> k
    struct Proj {
        std::string block_id;
        Dense gamma, beta;          // k -> channels, zero-initialized
    };
    std::vector<Proj> projs_;       // backbone descriptor order
    std::vector<std::string> block_ids_;

    Tensor v_;                      // code for the current forward
    double sf_ = 0.0;               // scale * gate for the current forward
};

// Max |steered - base| over the probe inputs at each timestep in ts; the
// zero-equivalence contract is that this is exactly 0.0 for a zero-initialized
// module (any scale) or for scale = 0 (any weights).
double verify_zero_equivalence(UNet& net, SteeringModule& steering,
                               const Tensor& probe_x,
                               const std::vector<int>& ts, const Tensor& c);

}  // namespace steerlab
