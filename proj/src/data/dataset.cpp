#include "data/dataset.hpp"

#include <cmath>
#include <functional>

#include "core/error.hpp"
#include "core/ops.hpp"

namespace steerlab {

const char* content_name(int content_id) {
    static const char* names[kNumContents] = {"circle", "square", "triangle",
                                              "star"};
    if (content_id < 0 || content_id >= kNumContents)
        throw ContractError("content_id out of range");
    return names[content_id];
}

const char* style_name(int style_id) {
    static const char* names[kNumStyles] = {"neutral", "palette", "stripes",
                                            "sepia", "noir"};
    if (style_id < 0 || style_id >= kNumStyles)
        throw ContractError("style_id out of range");
    return names[style_id];
}

namespace {

struct Pose {
    double cx, cy, radius, theta;
};

bool inside_shape(int content, double px, double py, const Pose& p) {
    double dx = px - p.cx, dy = py - p.cy;
    double ct = std::cos(p.theta), st = std::sin(p.theta);
    double u = ct * dx + st * dy;
    double v = -st * dx + ct * dy;
    double dist = std::sqrt(dx * dx + dy * dy);
    switch (content) {
        case 0:  // circle
            return dist <= p.radius;
        case 1: {  // square (rotated), half-side 0.8r
            double a = 0.8 * p.radius;
            return std::fabs(u) <= a && std::fabs(v) <= a;
        }
        case 2: {  // equilateral triangle inscribed in radius r
            double verts[3][2];
            for (int i = 0; i < 3; ++i) {
                double ang = p.theta + 2.0 * M_PI * i / 3.0 - M_PI / 2.0;
                verts[i][0] = p.cx + p.radius * std::cos(ang);
                verts[i][1] = p.cy + p.radius * std::sin(ang);
            }
            // Half-plane test; vertices are counter-clockwise by construction.
            for (int i = 0; i < 3; ++i) {
                double ax = verts[i][0], ay = verts[i][1];
                double bx = verts[(i + 1) % 3][0], by = verts[(i + 1) % 3][1];
                double cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax);
                if (cross < 0.0) return false;
            }
            return true;
        }
        case 3: {  // five-lobed star: radius modulated by cos(5*phi)
            double phi = std::atan2(dy, dx) - p.theta;
            double rho = p.radius * (0.55 + 0.45 * std::cos(5.0 * phi));
            return dist <= rho;
        }
        default:
            throw ContractError("content_id out of range");
    }
}

inline float clampf(double v) {
    return float(v < -1.0 ? -1.0 : (v > 1.0 ? 1.0 : v));
}

// Styles map a grayscale value g in [-1,1] (plus pixel position for
// textures) to RGB. Each is a fixed transform so style shift has an exact
// generative ground truth.
void style_pixel(int style, double g, int x, int y, float* rgb) {
    double t = (g + 1.0) * 0.5;  // luminance in [0,1]
    switch (style) {
        case 0:  // neutral: flat grayscale
            rgb[0] = rgb[1] = rgb[2] = clampf(g);
            break;
        case 1:  // palette: cold-to-warm duotone
            rgb[0] = clampf(-0.8 + t * 1.7);
            rgb[1] = clampf(-0.2 + t * 0.8);
            rgb[2] = clampf(0.8 - t * 1.1);
            break;
        case 2: {  // stripes: horizontal bands over grayscale
            double band = ((y / 4) % 2 == 0) ? 0.25 : -0.25;
            rgb[0] = rgb[1] = rgb[2] = clampf(g + band);
            (void)x;
            break;
        }
        case 3:  // sepia: warm highlights, brown shadows
            rgb[0] = clampf(-0.6 + t * 1.6);
            rgb[1] = clampf(-0.75 + t * 1.5);
            rgb[2] = clampf(-0.95 + t * 1.3);
            break;
        case 4: {  // noir: crushed high-contrast darks
            double tc = (t - 0.5) * 1.8 + 0.35;
            tc = tc < 0.0 ? 0.0 : (tc > 1.0 ? 1.0 : tc);
            rgb[0] = rgb[1] = rgb[2] = clampf(-1.0 + 1.55 * tc);
            break;
        }
        default:
            throw ContractError("style_id out of range");
    }
}

}  // namespace

Tensor render_sample(const PromptSpec& spec, Rng& rng, int image_size) {
    if (spec.content_id < 0 || spec.content_id >= kNumContents)
        throw ContractError("render_sample: content_id out of range");
    if (spec.style_id < 0 || spec.style_id >= kNumStyles)
        throw ContractError("render_sample: style_id out of range");
    int n = image_size;
    Pose pose;
    double lo = 0.3 * n, hi = 0.7 * n;
    pose.cx = rng.uniform(lo, hi);
    pose.cy = rng.uniform(lo, hi);
    pose.radius = rng.uniform(0.18 * n, 0.34 * n);
    pose.theta = rng.uniform(0.0, 2.0 * M_PI);
    double g_bg = rng.uniform(-0.9, -0.5);
    double g_fg = rng.uniform(0.2, 0.9);

    Tensor img = Tensor::zeros({3, n, n});
    float* d = img.data();
    int64_t plane = int64_t(n) * n;
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            double g = inside_shape(spec.content_id, double(x) + 0.5,
                                    double(y) + 0.5, pose)
                           ? g_fg
                           : g_bg;
            float rgb[3];
            style_pixel(spec.style_id, g, x, y, rgb);
            for (int c = 0; c < 3; ++c)
                d[c * plane + int64_t(y) * n + x] = rgb[c];
        }
    return img;
}

namespace {

DatasetSplit make_split(const std::string& tag, int count, int image_size,
                        Rng rng,
                        const std::function<PromptSpec(int)>& spec_of) {
    DatasetSplit s;
    s.tag = tag;
    s.images.reserve(size_t(count));
    s.prompts.reserve(size_t(count));
    for (int i = 0; i < count; ++i) {
        PromptSpec spec = spec_of(i);
        s.prompts.push_back(spec);
        s.images.push_back(render_sample(spec, rng, image_size));
    }
    return s;
}

}  // namespace

Corpus build_corpus(const CorpusConfig& cfg, uint64_t seed) {
    if (cfg.pretrain_size <= 0 || cfg.style_train_size <= 0 ||
        cfg.style_ref_size <= 0 || cfg.feat_train_size <= 0)
        throw ConfigError("corpus: split sizes must be positive");
    if (cfg.target_style <= 0 || cfg.target_style >= kNumStyles)
        throw ConfigError("corpus: target_style must be a non-neutral style id");

    Corpus c;
    c.cfg = cfg;
    c.pretrain = make_split("pretrain", cfg.pretrain_size, cfg.image_size,
                            Rng::derive(seed, 101), [&](int i) {
                                return PromptSpec{i % kNumContents, 0};
                            });
    c.style_train =
        make_split("style_train", cfg.style_train_size, cfg.image_size,
                   Rng::derive(seed, 102), [&](int i) {
                       return PromptSpec{i % kNumContents, cfg.target_style};
                   });
    c.style_ref =
        make_split("style_ref", cfg.style_ref_size, cfg.image_size,
                   Rng::derive(seed, 103), [&](int i) {
                       return PromptSpec{i % kNumContents, cfg.target_style};
                   });
    c.feat_train =
        make_split("feat_train", cfg.feat_train_size, cfg.image_size,
                   Rng::derive(seed, 104), [&](int i) {
                       return PromptSpec{i % kNumContents,
                                         (i / kNumContents) % kNumStyles};
                   });
    return c;
}

PromptTable PromptTable::init(int cond_dim, Rng& rng) {
    if (cond_dim <= 0) throw ConfigError("prompt table: cond_dim must be > 0");
    PromptTable t;
    t.table = Tensor::zeros({kNumContents + kNumStyles, cond_dim}, true);
    rng.fill_normal(t.table.data(), size_t(t.table.numel()));
    double stddev = 1.0 / std::sqrt(double(cond_dim));
    for (auto& v : t.table.vec()) v = float(double(v) * stddev);
    return t;
}

Tensor PromptTable::embed(const PromptSpec& spec) const {
    return embed_batch({spec});
}

Tensor PromptTable::embed_batch(const std::vector<PromptSpec>& specs,
                                const std::vector<bool>& dropped) const {
    if (!dropped.empty() && dropped.size() != specs.size())
        throw ContractError("prompt table: dropped mask size mismatch");
    std::vector<std::pair<int, int>> idx;
    idx.reserve(specs.size());
    for (size_t i = 0; i < specs.size(); ++i) {
        const auto& s = specs[i];
        if (s.content_id < 0 || s.content_id >= kNumContents ||
            s.style_id < 0 || s.style_id >= kNumStyles)
            throw ContractError("prompt table: id out of range");
        if (!dropped.empty() && dropped[i])
            idx.emplace_back(-1, -1);
        else
            idx.emplace_back(s.content_id, kNumContents + s.style_id);
    }
    return ops::cond_embed(table, idx);
}

Tensor PromptTable::null_embed() const {
    return ops::cond_embed(table, {{-1, -1}});
}

}  // namespace steerlab
