#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <map>

#include "core/error.hpp"
#include "core/rng.hpp"
#include "diffusion/ddim.hpp"
#include "model/rank1.hpp"
#include "model/steering.hpp"
#include "model/unet.hpp"
#include "oracles.hpp"

using namespace steerlab;

namespace {

UNetConfig tiny_cfg() {
    UNetConfig c;
    c.image_size = 16;
    c.base_channels = 8;
    c.channel_mult = {1, 2};
    c.blocks_per_level = 1;
    c.groups = 4;
    c.cond_dim = 8;
    c.time_dim = 16;
    return c;
}

Tensor randn(std::vector<int> shape, uint64_t seed) {
    Tensor t = Tensor::zeros(std::move(shape));
    Rng r(seed);
    r.fill_normal(t.data(), size_t(t.numel()));
    return t;
}

void nudge_head(UNet& net, uint64_t seed) {
    Rng r(seed);
    for (auto& [name, t] : net.named_params())
        if (name.find("head") != std::string::npos) {
            r.fill_normal(t.data(), size_t(t.numel()));
            for (auto& v : t.vec()) v *= 0.05f;
        }
}

void pseudo_train(SteeringModule& m, uint64_t seed) {
    Rng r(seed);
    for (auto& [name, t] : m.trainable_params())
        if (name.find("gamma") != std::string::npos ||
            name.find("beta") != std::string::npos) {
            r.fill_normal(t.data(), size_t(t.numel()));
            for (auto& v : t.vec()) v *= 0.05f;
        }
}

std::vector<float> unit_vec(int n, uint64_t seed) {
    Rng r(seed);
    std::vector<float> v(static_cast<size_t>(n));
    double n2 = 0.0;
    for (auto& x : v) {
        x = float(r.normal());
        n2 += double(x) * double(x);
    }
    double norm = std::sqrt(n2);
    for (auto& x : v) x = float(double(x) / norm);
    return v;
}

bool bytes_equal(const Tensor& a, const Tensor& b) {
    return a.numel() == b.numel() &&
           std::memcmp(a.data(), b.data(), size_t(a.numel()) * sizeof(float)) == 0;
}

struct NetEps : EpsModel {
    UNet* net = nullptr;
    AdapterSet adapters;
    Tensor eps(const Tensor& x_t, int t, const Tensor& c) override {
        return net->forward(x_t, t, c, adapters);
    }
};

// Mirrors the extraction accumulator: per-channel f64 sums of every steering
// delta, in the same visit order, while passing the delta through.
struct MirrorCapture : ActivationAdapter {
    SteeringModule* steering = nullptr;
    std::map<std::string, std::pair<std::vector<double>, int64_t>> acc;

    void begin(const Tensor& x_t, int t, const Tensor& c) override {
        steering->begin(x_t, t, c);
    }
    Tensor delta(const BlockDescriptor& block, const Tensor& h) override {
        Tensor d = steering->delta(block, h);
        if (!d.defined()) return d;
        int bsz = d.dim(0), ch = d.dim(1);
        int64_t hw = int64_t(d.dim(2)) * d.dim(3);
        auto& slot = acc[block.block_id];
        if (slot.first.empty()) slot.first.assign(size_t(ch), 0.0);
        const float* p = d.data();
        for (int b = 0; b < bsz; ++b)
            for (int c = 0; c < ch; ++c) {
                double s = 0.0;
                const float* q = p + (int64_t(b) * ch + c) * hw;
                for (int64_t i = 0; i < hw; ++i) s += double(q[i]);
                slot.first[size_t(c)] += s;
            }
        slot.second += int64_t(bsz) * hw;
        return d;
    }
};

}  // namespace

TEST_CASE("constructor enforces unit directions") {
    std::vector<float> good = unit_vec(8, 1);
    CHECK_NOTHROW(Rank1Adapter({{"mid.b0", good}}, 1.0));

    std::vector<float> bad = good;
    for (auto& v : bad) v *= 2.0f;
    CHECK_THROWS_AS(Rank1Adapter({{"mid.b0", bad}}, 1.0), ContractError);
    CHECK_THROWS_AS(Rank1Adapter({{"mid.b0", std::vector<float>(8, 0.0f)}}, 1.0),
                    ContractError);
}

TEST_CASE("delta broadcasts alpha * unit over batch and spatial dims") {
    std::vector<float> u = unit_vec(8, 2);
    double alpha = 0.37;
    Rank1Adapter a({{"mid.b0", u}}, alpha);

    BlockDescriptor mid{"mid.b0", Placement::mid, 8};
    BlockDescriptor down{"down0.b0", Placement::down, 8};
    Tensor h = randn({2, 8, 4, 4}, 3);

    CHECK_FALSE(a.delta(down, h).defined());  // unlisted block: no contribution

    Tensor d = a.delta(mid, h);
    REQUIRE(d.defined());
    REQUIRE(d.shape() == std::vector<int>({2, 8, 4, 4}));
    for (int b = 0; b < 2; b++)
        for (int c = 0; c < 8; c++) {
            float want = float(alpha * double(u[size_t(c)]));
            for (int i = 0; i < 16; i++)
                CHECK(d.vec()[size_t((b * 8 + c) * 16 + i)] == want);
        }

    Tensor wrong = randn({2, 5, 4, 4}, 4);
    CHECK_THROWS_AS(a.delta(mid, wrong), ContractError);
    Tensor rank2 = randn({2, 8}, 5);
    CHECK_THROWS_AS(a.delta(mid, rank2), ContractError);

    CHECK(a.trained_param_count() == 0);
}

TEST_CASE("alpha 0 leaves full trajectories bit-identical") {
    Rng rng(6);
    UNet net(tiny_cfg(), rng);
    nudge_head(net, 7);
    net.freeze();
    NoiseSchedule sched = make_linear_schedule(50, 1e-4, 0.02);

    std::vector<Rank1Adapter::Direction> dirs;
    for (const auto& d : net.descriptors())
        if (d.placement == Placement::mid || d.placement == Placement::up)
            dirs.push_back({d.block_id, unit_vec(d.channels, 8 + uint64_t(dirs.size()))});
    REQUIRE(dirs.size() >= 2);
    Rank1Adapter a(std::move(dirs), 0.0);

    Tensor z = randn({1, 3, 16, 16}, 9);
    Tensor c = randn({1, 8}, 10);
    Tensor cn = Tensor::zeros({1, 8});
    SamplerConfig samp;
    samp.steps = 8;
    samp.guidance = 3.0;

    NetEps base, steered;
    base.net = &net;
    steered.net = &net;
    steered.adapters = {&a};

    SampleResult r0 = ddim_sample(base, c, cn, samp, z, sched);
    SampleResult r1 = ddim_sample(steered, c, cn, samp, z, sched);
    CHECK(bytes_equal(r0.image, r1.image));

    a.set_alpha(0.5);
    SampleResult r2 = ddim_sample(steered, c, cn, samp, z, sched);
    CHECK_FALSE(bytes_equal(r0.image, r2.image));
}

TEST_CASE("extraction matches a hand-rolled capture of steering deltas") {
    Rng rng(11);
    UNet net(tiny_cfg(), rng);
    net.freeze();
    Rng srng(12);
    SteeringModule m({4, {Placement::mid, Placement::up}, 0.5, 10.0}, net, 1000,
                     srng);
    pseudo_train(m, 13);

    Tensor probe = randn({2, 3, 16, 16}, 14);
    Tensor c = randn({2, 8}, 15);
    std::vector<int> ts = {100, 500, 900};

    Rank1Adapter got = rank1_extract(net, m, probe, ts, c, 0.8);
    CHECK(got.alpha() == 0.8);
    CHECK(got.directions().size() == m.steered_blocks().size());

    MirrorCapture cap;
    cap.steering = &m;
    {
        NoGradScope ng;
        for (int t : ts) net.forward(probe, t, c, {&cap});
    }
    for (size_t i = 0; i < got.directions().size(); i++) {
        const auto& dir = got.directions()[i];
        CHECK(dir.block_id == m.steered_blocks()[i]);
        auto it = cap.acc.find(dir.block_id);
        REQUIRE(it != cap.acc.end());
        const auto& [sums, count] = it->second;
        REQUIRE(sums.size() == dir.unit.size());
        double n2 = 0.0;
        std::vector<double> mean(sums.size());
        for (size_t k = 0; k < sums.size(); k++) {
            mean[k] = sums[k] / double(count);
            n2 += mean[k] * mean[k];
        }
        double norm = std::sqrt(n2);
        REQUIRE(norm > 0.0);
        double un2 = 0.0;
        for (size_t k = 0; k < sums.size(); k++) {
            CHECK(double(dir.unit[size_t(k)]) ==
                  doctest::Approx(mean[k] / norm).epsilon(1e-6));
            un2 += double(dir.unit[size_t(k)]) * double(dir.unit[size_t(k)]);
        }
        CHECK(std::sqrt(un2) == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("extraction from an untrained module is degenerate") {
    Rng rng(16);
    UNet net(tiny_cfg(), rng);
    net.freeze();
    Rng srng(17);
    SteeringModule m({4, {Placement::mid}, 0.5, 10.0}, net, 1000, srng);
    // Zero-init projection heads: every delta is exactly zero.
    Tensor probe = randn({1, 3, 16, 16}, 18);
    Tensor c = randn({1, 8}, 19);
    CHECK_THROWS_AS(rank1_extract(net, m, probe, {500}, c, 1.0), NumericError);
}

TEST_CASE("checkpoint round-trip preserves directions exactly") {
    std::vector<Rank1Adapter::Direction> dirs = {{"mid.b0", unit_vec(16, 20)},
                                                 {"up0.b0", unit_vec(8, 21)}};
    Rank1Adapter a(dirs, 0.9);
    auto recs = a.to_records();
    Rank1Adapter b = Rank1Adapter::from_records(recs);
    CHECK(b.alpha() == 0.0);  // strength is a runtime knob, not a weight
    REQUIRE(b.directions().size() == 2);
    for (size_t i = 0; i < 2; i++) {
        CHECK(b.directions()[i].block_id == dirs[i].block_id);
        CHECK(b.directions()[i].unit == dirs[i].unit);
    }

    // Same alpha, same block, same bytes out.
    b.set_alpha(0.9);
    BlockDescriptor mid{"mid.b0", Placement::mid, 16};
    Tensor h = randn({1, 16, 2, 2}, 22);
    CHECK(bytes_equal(a.delta(mid, h), b.delta(mid, h)));

    CHECK_THROWS_AS(Rank1Adapter::from_records({}), IoError);
}
