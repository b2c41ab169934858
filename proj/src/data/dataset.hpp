#pragma once
#include <string>
#include <vector>

#include "core/rng.hpp"
#include "core/tensor.hpp"

namespace steerlab {

// Shape classes: circle, square, triangle, star.
constexpr int kNumContents = 4;
// Styles: neutral, palette, stripes, sepia, noir. Style 0 is neutral.
constexpr int kNumStyles = 5;

const char* content_name(int content_id);
const char* style_name(int style_id);

struct PromptSpec {
    int content_id = 0;
    int style_id = 0;
};

// One 32x32 RGB image in [-1,1]: the content shape at randomized pose on a
// randomized grayscale ground, run through the style's deterministic
// color/texture transform (neutral = untouched grayscale).
Tensor render_sample(const PromptSpec& spec, Rng& rng, int image_size = 32);

struct DatasetSplit {
    std::string tag;
    std::vector<Tensor> images;      // [3,H,W] each
    std::vector<PromptSpec> prompts; // parallel to images
    size_t size() const { return images.size(); }
};

struct CorpusConfig {
    int image_size = 32;
    int pretrain_size = 512;    // neutral style, all contents
    int style_train_size = 256; // target style, all contents
    int style_ref_size = 32;    // held-out prototypes of the target style
    int feat_train_size = 600;  // all (content, style) pairs, labeled
    int target_style = 3;       // sepia
};

struct Corpus {
    CorpusConfig cfg;
    DatasetSplit pretrain, style_train, style_ref, feat_train;
};

// Pure function of (cfg, seed); each split renders from its own derived
// stream, so resizing one never perturbs another.
Corpus build_corpus(const CorpusConfig& cfg, uint64_t seed);

// Frozen-after-pretraining embedding table: rows 0..C-1 are contents, rows
// C..C+S-1 are styles; a prompt embeds as the mean of its two rows.
struct PromptTable {
    Tensor table;  // [C+S, cond_dim]

    static PromptTable init(int cond_dim, Rng& rng);
    int cond_dim() const { return table.dim(1); }

    Tensor embed(const PromptSpec& spec) const;  // [1, cond_dim]
    // dropped[i] = true replaces row i with the zero "null" condition (CFG).
    Tensor embed_batch(const std::vector<PromptSpec>& specs,
                       const std::vector<bool>& dropped = {}) const;
    Tensor null_embed() const;  // [1, cond_dim] zeros
    void freeze() { table.set_requires_grad(false); }
};

}  // namespace steerlab
