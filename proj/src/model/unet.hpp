#pragma once
#include <functional>
#include <string>
#include <vector>

#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace steerlab {

enum class Placement { down, mid, up };
std::string placement_name(Placement p);
Placement placement_from(const std::string& s);

struct BlockDescriptor {
    std::string block_id;
    Placement placement = Placement::down;
    int channels = 0;
};

// Weight-space adapters (LoRA and friends) intercept parameter tensors by
// name just before a layer uses them. Returning the input unchanged leaves
// the layer bit-identical to the frozen backbone.
struct WeightTransform {
    virtual Tensor transform(const std::string& param_name, const Tensor& w) = 0;
    virtual ~WeightTransform() = default;
};

// Activation-space adapters add a residual delta after a block's output.
// begin() runs once per forward with the raw inputs; delta() runs per block
// and may return an undefined tensor to mean "no contribution here".
struct ActivationAdapter {
    virtual void begin(const Tensor& x_t, int t, const Tensor& c) {
        (void)x_t;
        (void)t;
        (void)c;
    }
    virtual Tensor delta(const BlockDescriptor& block, const Tensor& h) = 0;
    virtual ~ActivationAdapter() = default;
};
using AdapterSet = std::vector<ActivationAdapter*>;

// Interleaved sin/cos at geometrically spaced frequencies; dim must be even.
Tensor timestep_embedding(int t, int dim);

struct UNetConfig {
    int image_size = 32;
    int in_channels = 3;
    int base_channels = 32;
    std::vector<int> channel_mult = {1, 2};
    int blocks_per_level = 2;
    int groups = 8;
    int cond_dim = 32;
    int time_dim = 64;
};

struct Conv3x3 {
    std::string name;
    Tensor w, b;  // [O,C,3,3], [O]
    Tensor forward(const Tensor& x, WeightTransform* wt) const;
};

struct Dense {
    std::string name;
    Tensor w, b;  // [I,O], [O]
    Tensor forward(const Tensor& x, WeightTransform* wt) const;
};

// GN -> SiLU -> conv -> (+time/cond channel bias) -> GN -> SiLU -> conv,
// added back onto the input. All normalization is affine-free.
struct ResBlock {
    BlockDescriptor desc;
    int groups = 8;
    Conv3x3 conv1, conv2;
    Dense time_proj, cond_proj;
    Tensor forward(const Tensor& h, const Tensor& temb, const Tensor& c,
                   WeightTransform* wt) const;
};

// Tiny conditional U-Net: encoder / mid / decoder residual blocks with
// additive skip connections, a shared sinusoidal-time MLP, per-block
// condition injection, and adapter hook points after every residual add.
class UNet {
  public:
    UNet(const UNetConfig& cfg, Rng& rng);

    Tensor forward(const Tensor& x_t, int t, const Tensor& c,
                   const AdapterSet& adapters = {},
                   WeightTransform* wt = nullptr);

    const std::vector<BlockDescriptor>& descriptors() const { return descs_; }
    const UNetConfig& config() const { return cfg_; }

    NamedParams named_params();            // every parameter, stable order
    NamedParams trainable_params();        // empty once frozen
    void freeze();
    int64_t param_count() const;

    // Shapes of transformable weight matrices, for adapter target selection.
    struct LayerInfo {
        std::string name;
        std::vector<int> shape;
    };
    std::vector<LayerInfo> weight_layers() const;

    // Parameters of the blocks along the encoder path plus the time MLP;
    // the construction recipe for branch adapters.
    friend class SideBranchAdapter;

  private:
    Tensor run_block(size_t block_index, const Tensor& h, const Tensor& temb,
                     const Tensor& c, const AdapterSet& adapters,
                     WeightTransform* wt) const;
    void visit(const std::function<void(const std::string&, const Tensor&)>& f) const;

    UNetConfig cfg_;
    std::vector<int> level_channels_;
    Conv3x3 stem_, head_;
    Dense time_fc1_, time_fc2_;
    std::vector<ResBlock> blocks_;          // forward order
    std::vector<BlockDescriptor> descs_;    // parallel to blocks_
    std::vector<Conv3x3> down_tr_, up_tr_;  // level transitions
};

}  // namespace steerlab
