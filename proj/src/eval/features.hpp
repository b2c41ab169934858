#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "core/checkpoint.hpp"
#include "core/rng.hpp"
#include "core/tensor.hpp"
#include "data/dataset.hpp"
#include "model/unet.hpp"

namespace steerlab {

struct FeatConfig {
    int feature_dim = 64;
    int steps = 600;
    int batch = 16;
    double lr = 2e-3;
    int holdout = 64;          // held-out tail of feat_train for the gate
    double accuracy_gate = 0.9;
};

// Small conv classifier jointly predicting (content, style); its pooled
// penultimate layer is the frozen feature space behind every *-proxy metric.
class FeatureExtractor {
  public:
    FeatureExtractor(int feature_dim, Rng& rng);

    Tensor features(const Tensor& x);                  // [B,3,H,W] -> [B,d_f]
    std::pair<Tensor, Tensor> logits(const Tensor& x); // (content, style)

    NamedParams params();
    void freeze();
    bool frozen() const { return frozen_; }
    int feature_dim() const { return feature_dim_; }

    // Fraction of images whose content AND style are both argmax-correct.
    double joint_accuracy(const DatasetSplit& split, size_t begin, size_t end);

    std::vector<CheckpointRecord> to_records();
    static FeatureExtractor from_records(const std::vector<CheckpointRecord>& recs);

  private:
    int feature_dim_ = 64;
    bool frozen_ = false;
    Conv3x3 c1_, c2_, c3_;
    Dense head_content_, head_style_;
};

// Trains on the leading slice of feat_train, gates on the trailing holdout
// slice, freezes the extractor. Accuracy below the gate throws GateError —
// metrics computed in a broken feature space would be meaningless.
FeatureExtractor train_feature_extractor(const DatasetSplit& feat_train,
                                         const FeatConfig& cfg, uint64_t seed);

}  // namespace steerlab
