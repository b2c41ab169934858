#include "eval/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <numeric>

#include "core/error.hpp"
#include "core/ops.hpp"

namespace steerlab {

double cosine(const float* a, const float* b, int64_t n) {
    if (std::memcmp(a, b, size_t(n) * sizeof(float)) == 0) {
        // Bitwise-equal vectors: exactly 1.0, provided they are not zero.
        double nn = 0.0;
        for (int64_t i = 0; i < n; ++i) nn += double(a[i]) * double(a[i]);
        if (nn == 0.0) throw NumericError("cosine: zero-norm input");
        return 1.0;
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        dot += double(a[i]) * double(b[i]);
        na += double(a[i]) * double(a[i]);
        nb += double(b[i]) * double(b[i]);
    }
    if (na == 0.0 || nb == 0.0) throw NumericError("cosine: zero-norm input");
    double c = dot / (std::sqrt(na) * std::sqrt(nb));
    return c < -1.0 ? -1.0 : (c > 1.0 ? 1.0 : c);
}

double cosine(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel())
        throw ContractError("cosine: length mismatch");
    return cosine(a.data(), b.data(), a.numel());
}

namespace {

Tensor as_batch(const Tensor& x) {
    if (x.rank() == 4) return x;
    if (x.rank() == 3) return ops::stack_batch({x});
    throw ContractError("metrics: image must be [3,H,W] or [B,3,H,W]");
}

bool same_bits(const Tensor& a, const Tensor& b) {
    return a.numel() == b.numel() &&
           std::memcmp(a.data(), b.data(),
                       size_t(a.numel()) * sizeof(float)) == 0;
}

std::vector<float> feat_row(FeatureExtractor& f, const Tensor& x) {
    NoGradScope ng;
    Tensor v = f.features(as_batch(x));
    return std::vector<float>(v.data(), v.data() + v.numel());
}

}  // namespace

Prototypes build_prototypes(FeatureExtractor& f, const DatasetSplit& feat_train,
                            const DatasetSplit& style_ref) {
    NoGradScope ng;
    int d = f.feature_dim();
    Prototypes p;
    p.content_mean.assign(size_t(kNumContents), std::vector<float>());
    std::vector<std::vector<double>> acc(size_t(kNumContents),
                                         std::vector<double>(size_t(d), 0.0));
    std::vector<int64_t> cnt(size_t(kNumContents), 0);
    for (size_t i = 0; i < feat_train.size(); i += 32) {
        size_t j = std::min(feat_train.size(), i + 32);
        std::vector<Tensor> imgs(feat_train.images.begin() + long(i),
                                 feat_train.images.begin() + long(j));
        Tensor feats = f.features(ops::stack_batch(imgs));
        for (size_t r = 0; r < j - i; ++r) {
            int c = feat_train.prompts[i + r].content_id;
            const float* row = feats.data() + int64_t(r) * d;
            for (int k = 0; k < d; ++k) acc[size_t(c)][size_t(k)] += double(row[k]);
            ++cnt[size_t(c)];
        }
    }
    for (int c = 0; c < kNumContents; ++c) {
        if (cnt[size_t(c)] == 0)
            throw ContractError("build_prototypes: content " +
                                std::to_string(c) + " absent from feat_train");
        p.content_mean[size_t(c)].resize(size_t(d));
        for (int k = 0; k < d; ++k)
            p.content_mean[size_t(c)][size_t(k)] =
                float(acc[size_t(c)][size_t(k)] / double(cnt[size_t(c)]));
    }

    std::vector<double> sacc(size_t(d), 0.0);
    for (size_t i = 0; i < style_ref.size(); i += 32) {
        size_t j = std::min(style_ref.size(), i + 32);
        std::vector<Tensor> imgs(style_ref.images.begin() + long(i),
                                 style_ref.images.begin() + long(j));
        Tensor feats = f.features(ops::stack_batch(imgs));
        for (size_t r = 0; r < j - i; ++r) {
            const float* row = feats.data() + int64_t(r) * d;
            for (int k = 0; k < d; ++k) sacc[size_t(k)] += double(row[k]);
        }
    }
    if (style_ref.size() == 0)
        throw ContractError("build_prototypes: empty style_ref");
    p.style_mean.resize(size_t(d));
    for (int k = 0; k < d; ++k)
        p.style_mean[size_t(k)] = float(sacc[size_t(k)] / double(style_ref.size()));
    return p;
}

double clip_i_proxy(FeatureExtractor& f, const Tensor& x_steer,
                    const Tensor& x_base) {
    if (same_bits(x_steer, x_base)) return 1.0;  // zero-scale chain, exact
    auto fs = feat_row(f, x_steer);
    auto fb = feat_row(f, x_base);
    return cosine(fs.data(), fb.data(), int64_t(fs.size()));
}

double clip_t_proxy(FeatureExtractor& f, const Tensor& x, int content_id,
                    const Prototypes& proto) {
    if (content_id < 0 || content_id >= int(proto.content_mean.size()))
        throw ConfigError("clip_t: no prototype for content " +
                          std::to_string(content_id));
    auto fx = feat_row(f, x);
    return cosine(fx.data(), proto.content_mean[size_t(content_id)].data(),
                  int64_t(fx.size()));
}

double style_shift_proxy(FeatureExtractor& f, const Tensor& x_steer,
                         const Tensor& x_base, const Prototypes& proto) {
    if (same_bits(x_steer, x_base)) return 0.0;  // clamp of an exact zero
    auto fs = feat_row(f, x_steer);
    auto fb = feat_row(f, x_base);
    double cs = cosine(fs.data(), proto.style_mean.data(), int64_t(fs.size()));
    double cb = cosine(fb.data(), proto.style_mean.data(), int64_t(fb.size()));
    double d = cs - cb;
    return d > 0.0 ? d : 0.0;
}

double inv_stab(const Tensor& z_terminal, const Tensor& z_recovered) {
    return cosine(z_terminal, z_recovered);
}

double struct_dist_proxy(FeatureExtractor& f, const Tensor& x_steer,
                         const Tensor& x_base) {
    if (same_bits(x_steer, x_base)) return 0.0;
    auto fs = feat_row(f, x_steer);
    auto fb = feat_row(f, x_base);
    double s = 0.0;
    for (size_t i = 0; i < fs.size(); ++i) {
        double d = double(fs[i]) - double(fb[i]);
        s += d * d;
    }
    return std::sqrt(s);
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
    size_t n = v.size();
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t(0));
    std::stable_sort(idx.begin(), idx.end(),
                     [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n, 0.0);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
        double r = (double(i) + double(j)) * 0.5 + 1.0;  // 1-based average
        for (size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size())
        throw ContractError("spearman: length mismatch");
    if (xs.size() < 3) throw ContractError("spearman: need at least 3 points");
    std::vector<double> rx = average_ranks(xs), ry = average_ranks(ys);
    size_t n = xs.size();
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= double(n);
    my /= double(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double dx = rx[i] - mx, dy = ry[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;  // a constant vector has no rank order
    return sxy / std::sqrt(sxx * syy);
}

double spearman_perm_p(const std::vector<double>& xs,
                       const std::vector<double>& ys, int shuffles,
                       uint64_t seed) {
    double obs = std::fabs(spearman(xs, ys));
    Rng rng = Rng::derive(seed, 777);
    std::vector<double> perm = ys;
    int hits = 0;
    for (int s = 0; s < shuffles; ++s) {
        for (size_t i = perm.size() - 1; i > 0; --i) {
            size_t j = size_t(rng.uniform_int(0, int(i)));
            std::swap(perm[i], perm[j]);
        }
        if (std::fabs(spearman(xs, perm)) >= obs - 1e-12) ++hits;
    }
    return double(hits + 1) / double(shuffles + 1);
}

std::vector<CurvePoint> pool_curve(const std::vector<TradeoffPoint>& pts) {
    std::map<double, CurvePoint> by_knob;
    std::map<double, std::array<double, 4>> acc;
    for (const auto& p : pts) {
        auto& a = acc[p.knob];
        a[0] += p.clip_i;
        a[1] += p.style_shift;
        a[2] += p.inv_stab;
        a[3] += 1.0;
        auto& c = by_knob[p.knob];
        c.knob = p.knob;
        c.eff = p.eff;
    }
    std::vector<CurvePoint> out;
    for (auto& [knob, c] : by_knob) {
        const auto& a = acc[knob];
        c.clip_i = a[0] / a[3];
        c.style_shift = a[1] / a[3];
        c.inv_stab = a[2] / a[3];
        c.n = int(a[3]);
        out.push_back(c);
    }
    return out;  // map iteration is knob-ascending
}

MonotonicityReport monotonicity_report(const std::vector<TradeoffPoint>& pts,
                                       int perm_shuffles, uint64_t seed) {
    // (seed, knob) -> prompt-averaged metrics
    std::map<int, std::map<double, std::array<double, 4>>> grouped;
    for (const auto& p : pts) {
        auto& a = grouped[p.seed][p.knob];
        a[0] += p.style_shift;
        a[1] += p.clip_i;
        a[2] += p.inv_stab;
        a[3] += 1.0;
    }
    MonotonicityReport rep;
    std::vector<double> all_x, all_style, all_clip, all_inv;
    int viol_style = 0, viol_clip = 0, total_pairs = 0;
    for (auto& [sd, curve] : grouped) {
        if (curve.size() < 3)
            throw ContractError("monotonicity_report: seed " +
                                std::to_string(sd) + " has < 3 knob values");
        SeedMonotonicity m;
        m.seed = sd;
        std::vector<double> xs, style, clip, inv;
        for (auto& [knob, a] : curve) {  // knob-ascending
            xs.push_back(knob);
            style.push_back(a[0] / a[3]);
            clip.push_back(a[1] / a[3]);
            inv.push_back(a[2] / a[3]);
        }
        m.rho_style = spearman(xs, style);
        m.rho_clip_i = spearman(xs, clip);
        m.rho_inv_stab = spearman(xs, inv);
        m.pairs = int(xs.size()) - 1;
        for (size_t i = 0; i + 1 < xs.size(); ++i) {
            if (style[i + 1] < style[i]) ++m.violations_style;
            if (clip[i + 1] > clip[i]) ++m.violations_clip_i;
        }
        viol_style += m.violations_style;
        viol_clip += m.violations_clip_i;
        total_pairs += m.pairs;
        all_x.insert(all_x.end(), xs.begin(), xs.end());
        all_style.insert(all_style.end(), style.begin(), style.end());
        all_clip.insert(all_clip.end(), clip.begin(), clip.end());
        all_inv.insert(all_inv.end(), inv.begin(), inv.end());
        rep.per_seed.push_back(m);
    }
    if (rep.per_seed.empty())
        throw ContractError("monotonicity_report: no points");
    rep.p_style = spearman_perm_p(all_x, all_style, perm_shuffles, seed);
    rep.p_clip_i = spearman_perm_p(all_x, all_clip, perm_shuffles, seed + 1);
    rep.p_inv_stab = spearman_perm_p(all_x, all_inv, perm_shuffles, seed + 2);
    rep.violations_style_str =
        std::to_string(viol_style) + "/" + std::to_string(total_pairs);
    rep.violations_clip_i_str =
        std::to_string(viol_clip) + "/" + std::to_string(total_pairs);
    return rep;
}

std::vector<MatchedPair> matched_operating_points(
    const std::vector<CurvePoint>& steering,
    const std::vector<CurvePoint>& baseline, double tol) {
    if (steering.empty() || baseline.empty())
        throw ContractError("matched_operating_points: empty curve");
    std::vector<MatchedPair> out;
    for (const auto& s : steering) {
        const CurvePoint* best = nullptr;
        double best_d = 0.0;
        for (const auto& b : baseline) {
            double d = std::fabs(s.clip_i - b.clip_i);
            if (!best || d < best_d) {
                best = &b;
                best_d = d;
            }
        }
        if (best_d > tol) continue;
        MatchedPair p;
        p.steer_knob = s.knob;
        p.base_knob = best->knob;
        p.base_eff = best->eff;
        p.steer_clip = s.clip_i;
        p.base_clip = best->clip_i;
        p.delta_clip = best_d;
        p.steer_style = s.style_shift;
        p.base_style = best->style_shift;
        if (p.base_style != 0.0) {
            p.gain_pct = 100.0 * (p.steer_style - p.base_style) / p.base_style;
            p.gain_round = std::lround(p.gain_pct);
            p.gain_valid = true;
        } else if (p.steer_style == 0.0) {
            p.gain_pct = 0.0;
            p.gain_round = 0;
            p.gain_valid = true;
        }
        out.push_back(p);
    }
    return out;
}

}  // namespace steerlab
