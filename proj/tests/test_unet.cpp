#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <set>

#include "core/error.hpp"
#include "core/ops.hpp"
#include "core/rng.hpp"
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

// Records which blocks were offered a hook and checks the activation shape.
struct CaptureAdapter : ActivationAdapter {
    std::vector<std::string> seen;
    std::vector<std::vector<int>> shapes;
    Tensor delta(const BlockDescriptor& block, const Tensor& h) override {
        seen.push_back(block.block_id);
        shapes.push_back(h.shape());
        CHECK(h.dim(1) == block.channels);
        return Tensor();  // no contribution
    }
};

// Deliberately returns the wrong shape at one block.
struct BadShapeAdapter : ActivationAdapter {
    std::string target;
    Tensor delta(const BlockDescriptor& block, const Tensor& h) override {
        if (block.block_id != target) return Tensor();
        return Tensor::zeros({h.dim(0), h.dim(1) + 1, h.dim(2), h.dim(3)});
    }
};

// Scales one named weight; anything else passes through untouched.
struct ScaleOneWeight : WeightTransform {
    std::string target;
    double factor = 2.0;
    int hits = 0;
    Tensor transform(const std::string& name, const Tensor& w) override {
        if (name != target) return w;
        hits++;
        return ops::scale(w, factor);
    }
};

}  // namespace

TEST_CASE("timestep_embedding matches frozen values and basic contract") {
    Tensor e = timestep_embedding(500, 8);
    REQUIRE(e.numel() == 8);
    for (int i = 0; i < 8; i++)
        CHECK(e.vec()[size_t(i)] ==
              doctest::Approx(oracle::kTimestepEmb500[i]).epsilon(1e-6));
    CHECK_THROWS_AS(timestep_embedding(1, 7), ContractError);  // odd dim
}

TEST_CASE("default geometry: frozen parameter count and block table") {
    Rng rng(1);
    UNet net(UNetConfig{}, rng);
    CHECK(net.param_count() == oracle::kBackboneParams);

    const auto& ds = net.descriptors();
    REQUIRE(int(ds.size()) == oracle::kBackboneBlocks);
    std::vector<std::string> want_ids = {
        "down0.b0", "down0.b1", "down1.b0", "down1.b1", "mid.b0",
        "mid.b1",   "up1.b0",   "up1.b1",   "up0.b0",   "up0.b1"};
    std::vector<int> want_ch = {32, 32, 64, 64, 64, 64, 64, 64, 32, 32};
    for (size_t i = 0; i < ds.size(); i++) {
        CHECK(ds[i].block_id == want_ids[i]);
        CHECK(ds[i].channels == want_ch[i]);
    }
    CHECK(ds[0].placement == Placement::down);
    CHECK(ds[4].placement == Placement::mid);
    CHECK(ds[9].placement == Placement::up);

    // named_params covers the count exactly and has unique names.
    int64_t total = 0;
    std::set<std::string> names;
    for (auto& [n, t] : net.named_params()) {
        total += t.numel();
        names.insert(n);
    }
    CHECK(total == oracle::kBackboneParams);
    CHECK(int64_t(names.size()) == int64_t(net.named_params().size()));
}

TEST_CASE("fresh net predicts exactly zero (zero-initialized head)") {
    Rng rng(2);
    UNet net(tiny_cfg(), rng);
    Tensor x = randn({2, 3, 16, 16}, 3);
    Tensor c = randn({2, 8}, 4);
    Tensor y = net.forward(x, 10, c);
    CHECK(y.shape() == x.shape());
    CHECK(y.all_zero());
}

TEST_CASE("forward shape, determinism, and cond sensitivity after nudging") {
    Rng rng(5);
    UNet net(tiny_cfg(), rng);
    // Give the head real weights so outputs are informative.
    for (auto& [name, t] : net.named_params())
        if (name.find("head") != std::string::npos) {
            Rng hr(6);
            hr.fill_normal(t.data(), size_t(t.numel()));
            for (auto& v : t.vec()) v *= 0.05f;
        }
    Tensor x = randn({1, 3, 16, 16}, 7);
    Tensor c1 = randn({1, 8}, 8);
    Tensor c2 = randn({1, 8}, 9);

    Tensor y1 = net.forward(x, 25, c1);
    Tensor y2 = net.forward(x, 25, c1);
    CHECK(std::memcmp(y1.data(), y2.data(),
                      size_t(y1.numel()) * sizeof(float)) == 0);

    Tensor yc = net.forward(x, 25, c2);
    bool differs_c = std::memcmp(y1.data(), yc.data(),
                                 size_t(y1.numel()) * sizeof(float)) != 0;
    CHECK(differs_c);

    Tensor yt = net.forward(x, 40, c1);
    bool differs_t = std::memcmp(y1.data(), yt.data(),
                                 size_t(y1.numel()) * sizeof(float)) != 0;
    CHECK(differs_t);
}

TEST_CASE("freeze empties trainable_params but keeps forward working") {
    Rng rng(10);
    UNet net(tiny_cfg(), rng);
    CHECK(net.trainable_params().size() == net.named_params().size());
    net.freeze();
    CHECK(net.trainable_params().empty());
    Tensor x = randn({1, 3, 16, 16}, 11);
    Tensor c = Tensor::zeros({1, 8});
    Tensor y = net.forward(x, 5, c);
    CHECK(y.shape() == x.shape());
}

TEST_CASE("adapter hooks visit every block in forward order") {
    Rng rng(12);
    UNet net(tiny_cfg(), rng);
    CaptureAdapter cap;
    Tensor x = randn({2, 3, 16, 16}, 13);
    Tensor c = Tensor::zeros({2, 8});
    net.forward(x, 3, c, {&cap});
    REQUIRE(cap.seen.size() == net.descriptors().size());
    for (size_t i = 0; i < cap.seen.size(); i++)
        CHECK(cap.seen[i] == net.descriptors()[i].block_id);
    // Activations carry the batch through, spatial dims halve after level 0.
    CHECK(cap.shapes.front() == std::vector<int>{2, 8, 16, 16});
    CHECK(cap.shapes[1] == std::vector<int>{2, 16, 8, 8});  // down1.b0
}

TEST_CASE("mis-shaped adapter delta names the offending block") {
    Rng rng(14);
    UNet net(tiny_cfg(), rng);
    BadShapeAdapter bad;
    bad.target = "mid.b0";
    Tensor x = randn({1, 3, 16, 16}, 15);
    Tensor c = Tensor::zeros({1, 8});
    try {
        net.forward(x, 3, c, {&bad});
        FAIL("expected ContractError");
    } catch (const ContractError& e) {
        CHECK(std::string(e.what()).find("mid.b0") != std::string::npos);
    }
}

TEST_CASE("weight transform interposes on the named weight") {
    Rng rng(16);
    UNet net(tiny_cfg(), rng);
    // Nudge the head so outputs are nonzero.
    for (auto& [name, t] : net.named_params())
        if (name.find("head") != std::string::npos)
            for (auto& v : t.vec()) v = 0.01f;
    Tensor x = randn({1, 3, 16, 16}, 17);
    Tensor c = Tensor::zeros({1, 8});
    Tensor base = net.forward(x, 3, c);

    ScaleOneWeight wt;
    wt.target = net.weight_layers().front().name;
    Tensor transformed = net.forward(x, 3, c, {}, &wt);
    CHECK(wt.hits >= 1);
    CHECK(std::memcmp(base.data(), transformed.data(),
                      size_t(base.numel()) * sizeof(float)) != 0);

    // Identity transform keeps the forward bit-identical.
    ScaleOneWeight ident;
    ident.target = "__nonexistent__";
    Tensor same = net.forward(x, 3, c, {}, &ident);
    CHECK(std::memcmp(base.data(), same.data(),
                      size_t(base.numel()) * sizeof(float)) == 0);
}

TEST_CASE("weight_layers lists factorizable weights with shapes") {
    Rng rng(18);
    UNet net(UNetConfig{}, rng);
    auto layers = net.weight_layers();
    CHECK(!layers.empty());
    bool found_conv = false;
    for (auto& l : layers) {
        CHECK(!l.shape.empty());
        if (l.name == "mid.b0.conv1.w") {
            found_conv = true;
            CHECK(l.shape == std::vector<int>{64, 64, 3, 3});
        }
    }
    CHECK(found_conv);
}

TEST_CASE("config validation") {
    Rng rng(19);
    UNetConfig bad = tiny_cfg();
    bad.image_size = 15;  // not divisible by 2^(levels-1)
    CHECK_THROWS_AS(UNet(bad, rng), ConfigError);
    UNetConfig bad2 = tiny_cfg();
    bad2.base_channels = 6;  // not divisible by groups=4
    CHECK_THROWS_AS(UNet(bad2, rng), ConfigError);
    UNetConfig bad3 = tiny_cfg();
    bad3.time_dim = 15;  // odd sinusoidal dim
    CHECK_THROWS_AS(UNet(bad3, rng), ConfigError);
}

TEST_CASE("placement helpers round-trip") {
    CHECK(placement_from("mid") == Placement::mid);
    CHECK(placement_name(Placement::up) == "up");
    CHECK_THROWS_AS(placement_from("sideways"), ConfigError);
}
