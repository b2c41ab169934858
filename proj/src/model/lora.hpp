#pragma once
#include <string>
#include <vector>

#include "core/checkpoint.hpp"
#include "core/rng.hpp"
#include "core/tensor.hpp"
#include "model/unet.hpp"

namespace steerlab {

enum class LoraScalingMode { standard, rank_stabilized };
LoraScalingMode lora_mode_from(const std::string& s);
std::string lora_mode_name(LoraScalingMode m);

// scaling = alpha/r (standard) or alpha/sqrt(r) (rank-stabilized);
// the effective update strength is multiplier * scaling.
double lora_scaling(double alpha, int rank, LoraScalingMode mode);
double effective_scale(double multiplier, double alpha, int rank,
                       LoraScalingMode mode);
// Multiplier that realizes a target effective scale under the given mode.
double multiplier_for_effective(double eff, double alpha, int rank,
                                LoraScalingMode mode);

struct LoraConfig {
    int rank = 2;
    double alpha = 4.0;
    LoraScalingMode mode = LoraScalingMode::standard;
};

// Low-rank weight residual W' = W + m * scaling * (B @ A), applied to the
// conv and time/condition projection weights of mid/up blocks (conv kernels
// factorized as flattened [out, in*kh*kw] matrices). B is zero-initialized,
// so a fresh wrap is bit-identical to the base model.
class LoraAdapter : public WeightTransform {
  public:
    LoraAdapter(const LoraConfig& cfg, const UNet& net, Rng& rng);

    Tensor transform(const std::string& param_name, const Tensor& w) override;

    void set_multiplier(double m) { multiplier_ = m; }
    double multiplier() const { return multiplier_; }
    double scaling() const;

    NamedParams trainable_params();
    int64_t param_count() const;
    const LoraConfig& config() const { return cfg_; }
    const std::vector<std::string>& target_names() const { return names_; }

    std::vector<CheckpointRecord> to_records();
    static LoraAdapter from_records(const std::vector<CheckpointRecord>& recs);

  private:
    LoraAdapter() = default;

    struct Target {
        std::string name;       // wrapped parameter name
        Tensor a, b;            // A:[r,in_flat], B:[out,r]
        std::vector<int> shape; // wrapped weight shape
    };
    const Target* find(const std::string& name) const;

    LoraConfig cfg_;
    double multiplier_ = 1.0;
    std::vector<Target> targets_;
    std::vector<std::string> names_;
};

// True for weights the default wrap factorizes: mid/up block convs and
// time/cond projections.
bool lora_default_target(const std::string& param_name);

}  // namespace steerlab
