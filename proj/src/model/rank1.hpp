#pragma once
#include <string>
#include <vector>

#include "core/checkpoint.hpp"
#include "core/tensor.hpp"
#include "model/steering.hpp"
#include "model/unet.hpp"

namespace steerlab {

// Fixed-direction adapter: per block a frozen unit channel vector, applied as
// delta = alpha * s_l broadcast over batch and spatial dims. No condition
// input, no timestep gate, no trained parameters.
class Rank1Adapter : public ActivationAdapter {
  public:
    struct Direction {
        std::string block_id;
        std::vector<float> unit;  // length = block channels, L2 norm 1
    };

    Rank1Adapter(std::vector<Direction> dirs, double alpha);

    Tensor delta(const BlockDescriptor& block, const Tensor& h) override;

    void set_alpha(double a) { alpha_ = a; }
    double alpha() const { return alpha_; }
    const std::vector<Direction>& directions() const { return dirs_; }
    int64_t trained_param_count() const { return 0; }

    std::vector<CheckpointRecord> to_records() const;
    static Rank1Adapter from_records(const std::vector<CheckpointRecord>& recs);

  private:
    std::vector<Direction> dirs_;
    double alpha_ = 0.0;
};

// Runs the steered forward over the probe set, averages each steered block's
// delta over batch and spatial dims into a channel vector, and normalizes it
// to unit L2 norm. Throws NumericError on an all-zero residual.
Rank1Adapter rank1_extract(UNet& net, SteeringModule& steering,
                           const Tensor& probe_x, const std::vector<int>& ts,
                           const Tensor& c, double alpha);

}  // namespace steerlab
