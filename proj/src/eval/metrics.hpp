#pragma once
#include <map>
#include <string>
#include <vector>

#include "core/tensor.hpp"
#include "data/dataset.hpp"
#include "eval/features.hpp"

namespace steerlab {

// Cosine over f64 accumulators. Bitwise-equal inputs short-circuit to exactly
// 1.0 so the zero-scale metric chain stays exact. Zero norm -> NumericError.
double cosine(const float* a, const float* b, int64_t n);
double cosine(const Tensor& a, const Tensor& b);

// Class prototypes in feature space: per-content means (the text-prototype
// proxy behind clip_t) from feat_train, and the target style mean from the
// held-out style_ref split.
struct Prototypes {
    std::vector<std::vector<float>> content_mean;  // [C][d_f]
    std::vector<float> style_mean;                 // [d_f]
};
Prototypes build_prototypes(FeatureExtractor& f, const DatasetSplit& feat_train,
                            const DatasetSplit& style_ref);

// x in [B,3,H,W] with B=1, or [3,H,W].
double clip_i_proxy(FeatureExtractor& f, const Tensor& x_steer,
                    const Tensor& x_base);
double clip_t_proxy(FeatureExtractor& f, const Tensor& x, int content_id,
                    const Prototypes& proto);
double style_shift_proxy(FeatureExtractor& f, const Tensor& x_steer,
                         const Tensor& x_base, const Prototypes& proto);
double inv_stab(const Tensor& z_terminal, const Tensor& z_recovered);
// Feature-space L2 distance (LPIPS stand-in, reported without fidelity claims).
double struct_dist_proxy(FeatureExtractor& f, const Tensor& x_steer,
                         const Tensor& x_base);

// One evaluated sample at one knob setting.
struct TradeoffPoint {
    std::string adapter;     // steering | lora | rslora | rank1 | sidebranch
    double knob = 0.0;       // scale s / multiplier m / alpha
    double eff = 0.0;        // effective scale for weight-space adapters
    int prompt_index = 0;
    int content_id = 0;
    int seed = 0;
    double clip_i = 0.0;
    double clip_t = 0.0;
    double style_shift = 0.0;
    double inv_stab = 0.0;
    double struct_dist = 0.0;
};

// Spearman rank correlation with average ranks for ties; length >= 3.
double spearman(const std::vector<double>& xs, const std::vector<double>& ys);
// Two-sided permutation p-value over `shuffles` shuffles of ys.
double spearman_perm_p(const std::vector<double>& xs,
                       const std::vector<double>& ys, int shuffles,
                       uint64_t seed);

struct SeedMonotonicity {
    int seed = 0;
    double rho_style = 0.0, rho_clip_i = 0.0, rho_inv_stab = 0.0;
    int violations_style = 0;   // adjacent decreases (must be non-decreasing)
    int violations_clip_i = 0;  // adjacent increases (must be non-increasing)
    int pairs = 0;              // #scales - 1
};

struct MonotonicityReport {
    std::vector<SeedMonotonicity> per_seed;
    double p_style = 1.0, p_clip_i = 1.0, p_inv_stab = 1.0;  // pooled
    std::string violations_style_str;   // "v/n" aggregated, Table-2 style
    std::string violations_clip_i_str;
};

// Points for ONE adapter; rows are averaged over prompts per (seed, knob),
// then each seed's curve is rank-correlated against the knob. Needs >= 3
// knob values per seed.
MonotonicityReport monotonicity_report(const std::vector<TradeoffPoint>& pts,
                                       int perm_shuffles = 10000,
                                       uint64_t seed = 0);

// Pooled per-knob operating points (mean over prompts and seeds).
struct CurvePoint {
    double knob = 0.0;
    double eff = 0.0;
    double clip_i = 0.0;
    double style_shift = 0.0;
    double inv_stab = 0.0;
    int n = 0;
};
std::vector<CurvePoint> pool_curve(const std::vector<TradeoffPoint>& pts);

struct MatchedPair {
    double steer_knob = 0.0, base_knob = 0.0;
    double base_eff = 0.0;
    double steer_clip = 0.0, base_clip = 0.0;
    double delta_clip = 0.0;  // |steer_clip - base_clip|
    double steer_style = 0.0, base_style = 0.0;
    double gain_pct = 0.0;    // 100 * (steer - base) / base
    long gain_round = 0;
    bool gain_valid = false;  // false when base_style == 0
};

// For each steering point, the nearest baseline point by |delta clip_i|;
// pairs within tol are kept. Empty result is valid and must be diagnosed by
// the caller.
std::vector<MatchedPair> matched_operating_points(
    const std::vector<CurvePoint>& steering,
    const std::vector<CurvePoint>& baseline, double tol);

}  // namespace steerlab
