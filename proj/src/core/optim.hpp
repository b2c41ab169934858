#pragma once
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace steerlab {

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    double clip_norm = 1.0;  // global grad-norm clip; <= 0 disables
    int total_steps = 0;     // cosine decay horizon; 0 = constant lr
};

// AdamW with decoupled weight decay, cosine learning-rate decay and global
// gradient clipping. Moment math at f64 for run-to-run reproducibility of
// long trainings.
class AdamW {
  public:
    AdamW(NamedParams params, AdamWConfig cfg);

    // Ensures every parameter owns a (zeroed) gradient buffer. Call before
    // each backward pass.
    void zero_grad();

    // Clips, then applies one update. Throws if a parameter has no gradient
    // buffer at all (backward never ran and zero_grad was never called).
    void step();

    double lr_at(int64_t step) const;  // cosine schedule, step is 0-based
    int64_t step_count() const { return t_; }

  private:
    NamedParams params_;
    std::vector<std::vector<double>> m_, v_;
    AdamWConfig cfg_;
    int64_t t_ = 0;
};

}  // namespace steerlab
