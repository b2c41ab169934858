#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "core/error.hpp"
#include "core/ops.hpp"
#include "core/rng.hpp"
#include "eval/metrics.hpp"
#include "oracles.hpp"

using namespace steerlab;

namespace {

Tensor randn(std::vector<int> shape, uint64_t seed) {
    Tensor t = Tensor::zeros(std::move(shape));
    Rng r(seed);
    r.fill_normal(t.data(), size_t(t.numel()));
    return t;
}

// O(n^2) rank assignment: rank_i = #less + (#equal + 1) / 2, one-based.
// Independent of the production sort-based path.
std::vector<double> brute_ranks(const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (size_t i = 0; i < v.size(); i++) {
        int less = 0, equal = 0;
        for (size_t j = 0; j < v.size(); j++) {
            if (v[j] < v[i]) less++;
            if (v[j] == v[i]) equal++;
        }
        r[i] = double(less) + (double(equal) + 1.0) * 0.5;
    }
    return r;
}

double brute_spearman(const std::vector<double>& xs,
                      const std::vector<double>& ys) {
    std::vector<double> rx = brute_ranks(xs), ry = brute_ranks(ys);
    size_t n = xs.size();
    double mx = 0, my = 0;
    for (size_t i = 0; i < n; i++) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= double(n);
    my /= double(n);
    double sxy = 0, sxx = 0, syy = 0;
    for (size_t i = 0; i < n; i++) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

TradeoffPoint tp(int seed, double knob, double style, double clip, double inv,
                 int prompt = 0) {
    TradeoffPoint p;
    p.adapter = "steering";
    p.seed = seed;
    p.knob = knob;
    p.eff = knob;
    p.prompt_index = prompt;
    p.style_shift = style;
    p.clip_i = clip;
    p.inv_stab = inv;
    return p;
}

CurvePoint cp(double knob, double clip, double style) {
    CurvePoint c;
    c.knob = knob;
    c.eff = knob;
    c.clip_i = clip;
    c.style_shift = style;
    c.n = 1;
    return c;
}

}  // namespace

TEST_CASE("cosine exactness and failure modes") {
    std::vector<float> a = {1.0f, 2.0f, -3.0f};
    std::vector<float> b = a;
    CHECK(cosine(a.data(), b.data(), 3) == 1.0);  // bitwise equal: exactly 1

    std::vector<float> e1 = {1.0f, 0.0f}, e2 = {0.0f, 1.0f};
    CHECK(cosine(e1.data(), e2.data(), 2) == 0.0);
    std::vector<float> neg = {-1.0f, 0.0f};
    CHECK(cosine(e1.data(), neg.data(), 2) == -1.0);

    // Colinear but not bitwise equal: unit cosine only up to rounding.
    std::vector<float> v = {1.0f, 2.0f}, w = {2.0f, 4.0f};
    CHECK(cosine(v.data(), w.data(), 2) == doctest::Approx(1.0).epsilon(1e-15));

    std::vector<float> z = {0.0f, 0.0f};
    CHECK_THROWS_AS(cosine(z.data(), z.data(), 2), NumericError);
    CHECK_THROWS_AS(cosine(e1.data(), z.data(), 2), NumericError);
    CHECK_THROWS_AS(cosine(z.data(), e1.data(), 2), NumericError);

    Tensor ta = randn({4}, 1), tb = randn({5}, 2);
    CHECK_THROWS_AS(cosine(ta, tb), ContractError);
    Tensor tc = randn({2, 2}, 3);
    CHECK(cosine(ta, ta) == 1.0);
    CHECK(cosine(ta, tc) == cosine(ta.data(), tc.data(), 4));
    CHECK(inv_stab(ta, tc) == cosine(ta, tc));
}

TEST_CASE("spearman hand values") {
    CHECK(spearman({1, 2, 3, 4}, {1, 3, 2, 4}) == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(spearman({1, 2, 3, 4, 5}, {2, 4, 6, 8, 10}) == 1.0);
    CHECK(spearman({1, 2, 3, 4, 5}, {10, 8, 6, 4, 2}) == -1.0);
    CHECK(spearman({0.0, 0.25, 0.5}, {7, 7, 7}) == 0.0);  // constant: no order
    // Monotone in rank but nonlinear in value: rank correlation is still 1.
    CHECK(spearman({1, 2, 3, 4}, {0.1, 0.2, 10.0, 1000.0}) == 1.0);
    CHECK_THROWS_AS(spearman({1, 2}, {1, 2}), ContractError);
    CHECK_THROWS_AS(spearman({1, 2, 3}, {1, 2}), ContractError);
}

TEST_CASE("spearman matches the brute-force oracle on random vectors with ties") {
    Rng rng(123);
    for (int trial = 0; trial < 100; trial++) {
        int n = rng.uniform_int(3, 50);
        std::vector<double> xs(static_cast<size_t>(n)), ys(static_cast<size_t>(n));
        // Draw from a small integer alphabet so ties are common.
        int alphabet = rng.uniform_int(2, 12);
        for (auto& v : xs) v = double(rng.uniform_int(0, alphabet));
        for (auto& v : ys) v = double(rng.uniform_int(0, alphabet));
        double got = spearman(xs, ys);
        double want = brute_spearman(xs, ys);
        INFO("trial ", trial, " n=", n);
        CHECK(std::fabs(got - want) <= 1e-12);
    }
}

TEST_CASE("permutation p-value behaves like a p-value") {
    std::vector<double> xs, ys_mono, ys_noise;
    Rng rng(9);
    for (int i = 0; i < 12; i++) {
        xs.push_back(double(i));
        ys_mono.push_back(double(i) * 2.5 + 1.0);
        ys_noise.push_back(rng.normal());
    }
    double p_mono = spearman_perm_p(xs, ys_mono, 2000, 0);
    CHECK(p_mono > 0.0);
    CHECK(p_mono <= 0.005);  // perfect order is essentially never matched
    double p_noise = spearman_perm_p(xs, ys_noise, 2000, 0);
    CHECK(p_noise > 0.05);

    CHECK(spearman_perm_p(xs, ys_mono, 500, 7) ==
          spearman_perm_p(xs, ys_mono, 500, 7));  // seeded, reproducible
}

TEST_CASE("proxy metrics collapse exactly on identical inputs") {
    Rng frng(11);
    FeatureExtractor f(8, frng);

    Rng irng(12);
    PromptSpec spec{1, 3};
    Tensor x = render_sample(spec, irng, 16);
    Tensor y = render_sample(spec, irng, 16);

    CHECK(clip_i_proxy(f, x, x) == 1.0);
    CHECK(struct_dist_proxy(f, x, x) == 0.0);

    double ci = clip_i_proxy(f, x, y);
    CHECK(ci < 1.0);
    CHECK(ci > -1.0);
    CHECK(struct_dist_proxy(f, x, y) > 0.0);

    // Batch-of-one and bare-image layouts agree.
    Tensor xb = ops::stack_batch({x});
    CHECK(clip_i_proxy(f, xb, y) == clip_i_proxy(f, x, y));
    // Identical bytes short-circuit before any shape check; distinct bad
    // layouts must still be rejected.
    Tensor bad1 = randn({2, 2}, 13), bad2 = randn({2, 2}, 16);
    CHECK(clip_i_proxy(f, bad1, bad1) == 1.0);
    CHECK_THROWS_AS(clip_i_proxy(f, bad1, bad2), ContractError);
}

TEST_CASE("prototypes match a hand-rolled per-content mean") {
    Rng frng(14);
    FeatureExtractor f(8, frng);

    // 40 images crosses the internal batch boundary of 32.
    DatasetSplit feat, ref;
    Rng irng(15);
    for (int i = 0; i < 40; i++) {
        PromptSpec s{i % kNumContents, (i / kNumContents) % kNumStyles};
        feat.prompts.push_back(s);
        feat.images.push_back(render_sample(s, irng, 16));
    }
    for (int i = 0; i < 5; i++) {
        PromptSpec s{i % kNumContents, 3};
        ref.prompts.push_back(s);
        ref.images.push_back(render_sample(s, irng, 16));
    }

    Prototypes p = build_prototypes(f, feat, ref);
    REQUIRE(p.content_mean.size() == size_t(kNumContents));
    REQUIRE(p.style_mean.size() == 8);

    NoGradScope ng;
    std::vector<std::vector<double>> acc(4, std::vector<double>(8, 0.0));
    std::vector<int> cnt(4, 0);
    std::vector<double> sacc(8, 0.0);
    for (size_t i = 0; i < feat.size(); i++) {
        Tensor row = f.features(ops::stack_batch({feat.images[i]}));
        int c = feat.prompts[i].content_id;
        for (int k = 0; k < 8; k++) acc[size_t(c)][size_t(k)] += double(row.vec()[size_t(k)]);
        cnt[size_t(c)]++;
    }
    for (size_t i = 0; i < ref.size(); i++) {
        Tensor row = f.features(ops::stack_batch({ref.images[i]}));
        for (int k = 0; k < 8; k++) sacc[size_t(k)] += double(row.vec()[size_t(k)]);
    }
    for (int c = 0; c < 4; c++)
        for (int k = 0; k < 8; k++)
            CHECK(double(p.content_mean[size_t(c)][size_t(k)]) ==
                  doctest::Approx(acc[size_t(c)][size_t(k)] / cnt[size_t(c)]).epsilon(1e-6));
    for (int k = 0; k < 8; k++)
        CHECK(double(p.style_mean[size_t(k)]) ==
              doctest::Approx(sacc[size_t(k)] / 5.0).epsilon(1e-6));

    // clip_t against these prototypes is a plain cosine.
    Tensor probe = feat.images[2];
    Tensor fr = f.features(ops::stack_batch({probe}));
    std::vector<float> pm = p.content_mean[size_t(feat.prompts[2].content_id)];
    CHECK(clip_t_proxy(f, probe, feat.prompts[2].content_id, p) ==
          doctest::Approx(cosine(fr.data(), pm.data(), 8)).epsilon(1e-12));
    CHECK_THROWS_AS(clip_t_proxy(f, probe, -1, p), ConfigError);
    CHECK_THROWS_AS(clip_t_proxy(f, probe, kNumContents, p), ConfigError);

    // style_shift: non-negative, exactly zero on identical inputs.
    CHECK(style_shift_proxy(f, probe, probe, p) == 0.0);
    CHECK(style_shift_proxy(f, feat.images[3], probe, p) >= 0.0);

    // Missing content and empty reference are contract violations.
    DatasetSplit only0;
    for (int i = 0; i < 4; i++) {
        only0.prompts.push_back({0, 0});
        only0.images.push_back(feat.images[size_t(i)]);
    }
    CHECK_THROWS_AS(build_prototypes(f, only0, ref), ContractError);
    DatasetSplit empty;
    CHECK_THROWS_AS(build_prototypes(f, feat, empty), ContractError);
}

TEST_CASE("pool_curve averages per knob in ascending order") {
    std::vector<TradeoffPoint> pts;
    // Interleave knobs to prove sorting; two rows per knob.
    pts.push_back(tp(0, 0.5, 0.20, 0.90, 0.80));
    pts.push_back(tp(0, 0.0, 0.00, 1.00, 1.00));
    pts.push_back(tp(1, 0.5, 0.40, 0.70, 0.60));
    pts.push_back(tp(1, 0.0, 0.00, 1.00, 1.00));

    auto curve = pool_curve(pts);
    REQUIRE(curve.size() == 2);
    CHECK(curve[0].knob == 0.0);
    CHECK(curve[1].knob == 0.5);
    CHECK(curve[0].clip_i == 1.0);
    CHECK(curve[0].style_shift == 0.0);
    CHECK(curve[0].inv_stab == 1.0);
    CHECK(curve[0].n == 2);
    CHECK(curve[1].clip_i == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(curve[1].style_shift == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(curve[1].inv_stab == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(curve[1].n == 2);
    CHECK(curve[1].eff == 0.5);
}

TEST_CASE("monotonicity report on clean and violating curves") {
    // Two seeds, four knobs, two prompts each; style rises, clip falls,
    // inversion stability falls.
    std::vector<TradeoffPoint> pts;
    for (int seed : {0, 1})
        for (int ki = 0; ki < 4; ki++) {
            double knob = 0.25 * ki;
            for (int prompt = 0; prompt < 2; prompt++) {
                double jitter = 0.001 * prompt;
                pts.push_back(tp(seed, knob, 0.1 * ki + jitter,
                                 1.0 - 0.05 * ki + jitter, 1.0 - 0.1 * ki,
                                 prompt));
            }
        }
    MonotonicityReport rep = monotonicity_report(pts, 500, 3);
    REQUIRE(rep.per_seed.size() == 2);
    for (const auto& m : rep.per_seed) {
        CHECK(m.rho_style == 1.0);
        CHECK(m.rho_clip_i == -1.0);
        CHECK(m.rho_inv_stab == -1.0);
        CHECK(m.violations_style == 0);
        CHECK(m.violations_clip_i == 0);
        CHECK(m.pairs == 3);
    }
    CHECK(rep.violations_style_str == "0/6");
    CHECK(rep.violations_clip_i_str == "0/6");
    CHECK(rep.p_style <= 0.01);
    CHECK(rep.p_clip_i <= 0.01);

    // Inject one adjacent dip in style for seed 1 (both prompts, so the
    // prompt-average actually dips).
    std::vector<TradeoffPoint> dip = pts;
    for (auto& p : dip)
        if (p.seed == 1 && p.knob == 0.5) p.style_shift = 0.0;
    MonotonicityReport rep2 = monotonicity_report(dip, 500, 3);
    CHECK(rep2.per_seed[0].violations_style == 0);
    CHECK(rep2.per_seed[1].violations_style == 1);
    CHECK(rep2.violations_style_str == "1/6");
    CHECK(rep2.per_seed[1].rho_style < 1.0);

    // Degenerate inputs.
    CHECK_THROWS_AS(monotonicity_report({}, 10, 0), ContractError);
    std::vector<TradeoffPoint> two = {tp(0, 0.0, 0, 1, 1), tp(0, 0.5, 1, 0, 0)};
    CHECK_THROWS_AS(monotonicity_report(two, 10, 0), ContractError);
}

TEST_CASE("matched operating points reproduce the reference table") {
    std::vector<CurvePoint> steer, lora;
    for (int i = 0; i < 3; i++) {
        steer.push_back(cp(0.5 + 0.25 * i, oracle::kFixSteerClip[i],
                           oracle::kFixSteerStyle[i]));
        lora.push_back(cp(0.25 + 0.25 * i, oracle::kFixLoraClip[i],
                          oracle::kFixLoraStyle[i]));
    }
    auto pairs = matched_operating_points(steer, lora, 0.01);
    REQUIRE(pairs.size() == 3);
    for (size_t i = 0; i < 3; i++) {
        INFO("pair ", i);
        CHECK(std::fabs(pairs[i].delta_clip - oracle::kFixDeltaClip[i]) <= 1e-12);
        CHECK(pairs[i].gain_valid);
        CHECK(pairs[i].gain_round == oracle::kFixGainPct[i]);
        CHECK(pairs[i].steer_clip == oracle::kFixSteerClip[i]);
        CHECK(pairs[i].base_clip == oracle::kFixLoraClip[i]);
        CHECK(pairs[i].base_eff == lora[i].knob);
    }

    // Tightening the tolerance drops the wider pairs.
    auto tight = matched_operating_points(steer, lora, 0.002);
    REQUIRE(tight.size() == 1);
    CHECK(std::fabs(tight[0].delta_clip - 0.001) <= 1e-12);

    // A baseline with zero style shift cannot express a percentage gain.
    std::vector<CurvePoint> zero_base = {cp(0.5, 0.974, 0.0)};
    auto zp = matched_operating_points({cp(0.5, 0.974, 0.0125)}, zero_base, 0.01);
    REQUIRE(zp.size() == 1);
    CHECK_FALSE(zp[0].gain_valid);
    CHECK(zp[0].gain_pct == 0.0);

    CHECK_THROWS_AS(matched_operating_points({}, lora, 0.01), ContractError);
    CHECK_THROWS_AS(matched_operating_points(steer, {}, 0.01), ContractError);
}
