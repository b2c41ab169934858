#pragma once
#include <string>
#include <vector>

#include "core/checkpoint.hpp"
#include "core/rng.hpp"
#include "core/tensor.hpp"
#include "model/unet.hpp"

namespace steerlab {

// Trainable copy of the backbone's encoder path (stem, down blocks,
// transitions, mid blocks, time MLP), merged into the mid/up hook points
// through zero-initialized 1x1 convolutions. Fresh construction is therefore
// bit-identical to the frozen base; training moves the whole branch.
class SideBranchAdapter : public ActivationAdapter {
  public:
    explicit SideBranchAdapter(const UNet& net);

    void begin(const Tensor& x_t, int t, const Tensor& c) override;
    Tensor delta(const BlockDescriptor& block, const Tensor& h) override;

    void set_multiplier(double m) { multiplier_ = m; }
    double multiplier() const { return multiplier_; }

    NamedParams trainable_params();
    int64_t param_count() const;

    std::vector<CheckpointRecord> to_records();
    static SideBranchAdapter from_records(
        const std::vector<CheckpointRecord>& recs, const UNet& net);

  private:
    struct Merge {
        std::string block_id;
        int level = 0;    // -1 = mid feature
        Tensor w, b;      // 1x1 conv, zero-initialized
    };

    int groups_ = 8;
    int blocks_per_level_ = 2;
    int time_dim_ = 64;
    double multiplier_ = 1.0;
    Conv3x3 stem_;
    Dense time_fc1_, time_fc2_;
    std::vector<ResBlock> down_blocks_, mid_blocks_;
    std::vector<Conv3x3> down_tr_;
    std::vector<int> level_channels_;
    std::vector<Merge> merges_;

    std::vector<Tensor> feats_;  // per level, after that level's down blocks
    Tensor mid_feat_;
};

}  // namespace steerlab
