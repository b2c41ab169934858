#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "core/error.hpp"
#include "core/ops.hpp"
#include "oracles.hpp"

using namespace steerlab;
namespace o = steerlab::ops;

static void check_close(const Tensor& got, const std::vector<float>& want,
                        double tol = 0.0) {
    REQUIRE(got.numel() == int64_t(want.size()));
    for (size_t i = 0; i < want.size(); i++) {
        if (tol == 0.0)
            CHECK(got.vec()[i] == want[i]);
        else
            CHECK(got.vec()[i] == doctest::Approx(want[i]).epsilon(tol));
    }
}

TEST_CASE("elementwise add/sub/mul") {
    Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
    Tensor b = Tensor::from({2, 2}, {10, 20, 30, 40});
    check_close(o::add(a, b), {11, 22, 33, 44});
    check_close(o::sub(a, b), {-9, -18, -27, -36});
    check_close(o::mul(a, b), {10, 40, 90, 160});
    Tensor c = Tensor::zeros({4});
    CHECK_THROWS_AS(o::add(a, c), ContractError);  // rank differs
    CHECK_THROWS_AS(o::mul(a, Tensor::zeros({2, 3})), ContractError);
}

TEST_CASE("scale applies the factor at f64 and rounds once") {
    Tensor x = Tensor::from({3}, {1.0f, -0.3f, 7.25f});
    Tensor y = o::scale(x, 0.1);
    for (int i = 0; i < 3; i++)
        CHECK(y.vec()[size_t(i)] == float(0.1 * double(x.vec()[size_t(i)])));
    CHECK(o::scale(x, 0.0).all_zero());
}

TEST_CASE("linear is xW + b") {
    Tensor x = Tensor::from({1, 2}, {1, 2});
    Tensor w = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor b = Tensor::from({3}, {0.5f, 0.0f, -1.0f});
    check_close(o::linear(x, w, b), {9.5f, 12.0f, 14.0f});

    Tensor x2 = Tensor::from({2, 2}, {1, 0, 0, 1});  // identity batch
    Tensor y2 = o::linear(x2, w, b);
    check_close(y2, {1.5f, 2.0f, 2.0f, 4.5f, 5.0f, 5.0f});

    CHECK_THROWS_AS(o::linear(Tensor::zeros({1, 3}), w, b), ContractError);
    CHECK_THROWS_AS(o::linear(x, w, Tensor::zeros({2})), ContractError);
}

TEST_CASE("conv2d cross-correlation with zero padding") {
    Tensor x = Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4});
    Tensor b0 = Tensor::zeros({1});

    Tensor k_id = Tensor::zeros({1, 1, 3, 3});
    k_id.data()[4] = 1.0f;  // center tap
    check_close(o::conv2d(x, k_id, b0), {1, 2, 3, 4});

    Tensor k_right = Tensor::zeros({1, 1, 3, 3});
    k_right.data()[5] = 1.0f;  // (row 1, col 2): reads the right neighbor
    check_close(o::conv2d(x, k_right, b0), {2, 0, 4, 0});

    Tensor k_down = Tensor::zeros({1, 1, 3, 3});
    k_down.data()[7] = 1.0f;  // (row 2, col 1): reads the neighbor below
    check_close(o::conv2d(x, k_down, b0), {3, 4, 0, 0});

    Tensor bias = Tensor::from({1}, {10.0f});
    check_close(o::conv2d(x, k_id, bias), {11, 12, 13, 14});

    // Two input channels sum into one output channel.
    Tensor x2 = Tensor::from({1, 2, 1, 1}, {2, 5});
    Tensor k2 = Tensor::zeros({1, 2, 3, 3});
    k2.data()[4] = 1.0f;       // center of channel 0
    k2.data()[9 + 4] = 10.0f;  // center of channel 1
    check_close(o::conv2d(x2, k2, b0), {52});

    CHECK_THROWS_AS(o::conv2d(x, Tensor::zeros({1, 2, 3, 3}), b0), ContractError);
    CHECK_THROWS_AS(o::conv2d(x, k_id, Tensor::zeros({2})), ContractError);
}

TEST_CASE("conv1x1 mixes channels pointwise") {
    Tensor x = Tensor::from({1, 2, 1, 2}, {1, 2, 3, 4});  // c0=[1,2] c1=[3,4]
    Tensor k = Tensor::from({1, 2}, {2, 3});
    Tensor b = Tensor::from({1}, {0.5f});
    check_close(o::conv1x1(x, k, b), {11.5f, 16.5f});
    CHECK_THROWS_AS(o::conv1x1(Tensor::zeros({2, 2}), k, b), ContractError);
}

TEST_CASE("group_norm normalizes per (batch, group)") {
    Tensor x = Tensor::from({1, 4, 1, 1}, {1, 2, 3, 4});
    Tensor y1 = o::group_norm(x, 1);
    double inv = 1.0 / std::sqrt(1.25 + 1e-5);
    check_close(y1,
                {float(-1.5 * inv), float(-0.5 * inv), float(0.5 * inv),
                 float(1.5 * inv)},
                1e-6);

    Tensor y2 = o::group_norm(x, 2);
    double inv2 = 1.0 / std::sqrt(0.25 + 1e-5);
    check_close(y2,
                {float(-0.5 * inv2), float(0.5 * inv2), float(-0.5 * inv2),
                 float(0.5 * inv2)},
                1e-6);

    // Spatial statistics participate too.
    Tensor xs = Tensor::from({1, 1, 2, 2}, {1, 1, 1, 1});
    CHECK(o::group_norm(xs, 1).all_zero());  // zero variance -> zeros

    CHECK_THROWS_AS(o::group_norm(x, 3), ConfigError);  // 4 % 3 != 0
    CHECK_THROWS_AS(o::group_norm(Tensor::zeros({4}), 1), ContractError);
    CHECK_THROWS_AS(o::group_norm(x, 1, 0.0), ConfigError);
}

TEST_CASE("silu and sigmoid match frozen references") {
    Tensor x = Tensor::from({3}, {1.0f, 0.0f, -5.0f});
    Tensor s = o::silu(x);
    CHECK(s.vec()[0] == doctest::Approx(oracle::kSilu1).epsilon(1e-6));
    CHECK(s.vec()[1] == 0.0f);
    Tensor g = o::sigmoid(x);
    CHECK(g.vec()[1] == 0.5f);
    CHECK(g.vec()[2] == doctest::Approx(oracle::kSigmoidNeg5).epsilon(1e-6));
    // Symmetry: sigmoid(x) + sigmoid(-x) = 1.
    Tensor gp = o::sigmoid(Tensor::from({1}, {5.0f}));
    CHECK(double(gp.vec()[0]) + double(g.vec()[2]) ==
          doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("reductions") {
    Tensor x = Tensor::from({2, 2}, {1, 2, 3, 4});
    CHECK(o::sum(x).item() == 10.0f);
    CHECK(o::mean(x).item() == 2.5f);

    Tensor p = Tensor::from({3}, {1, 2, 3});
    Tensor t = Tensor::from({3}, {0, 2, 5});
    CHECK(o::mse(p, t).item() == doctest::Approx(5.0 / 3.0).epsilon(1e-6));
    CHECK(o::mse(p, p).item() == 0.0f);
    CHECK_THROWS_AS(o::mse(p, x), ContractError);
}

TEST_CASE("cross_entropy is mean NLL with a stable log-sum-exp") {
    Tensor z = Tensor::zeros({1, 3});
    CHECK(o::cross_entropy(z, {0}).item() ==
          doctest::Approx(std::log(3.0)).epsilon(1e-6));

    Tensor z2 = Tensor::from({2, 2}, {2, -1, 0, 3});
    double l0 = std::log(std::exp(2.0) + std::exp(-1.0)) - 2.0;
    double l1 = std::log(std::exp(0.0) + std::exp(3.0)) - 3.0;
    CHECK(o::cross_entropy(z2, {0, 1}).item() ==
          doctest::Approx(0.5 * (l0 + l1)).epsilon(1e-6));

    // Huge logits must not overflow.
    Tensor big = Tensor::from({1, 2}, {1000.0f, 0.0f});
    CHECK(std::isfinite(double(o::cross_entropy(big, {0}).item())));

    CHECK_THROWS_AS(o::cross_entropy(z, {0, 1}), ContractError);
    CHECK_THROWS_AS(o::cross_entropy(z, {3}), ContractError);
}

TEST_CASE("avgpool2 and upsample2") {
    Tensor x = Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4});
    check_close(o::avgpool2(x), {2.5f});
    check_close(o::upsample2(Tensor::from({1, 1, 1, 1}, {5})), {5, 5, 5, 5});
    // Pooling a nearest-upsample returns the original exactly.
    Tensor y = o::avgpool2(o::upsample2(x));
    check_close(y, {1, 2, 3, 4});
    CHECK_THROWS_AS(o::avgpool2(Tensor::zeros({1, 1, 3, 2})), ContractError);
}

TEST_CASE("add_channel_bias broadcasts over space") {
    Tensor x = Tensor::from({2, 2, 1, 1}, {1, 2, 3, 4});
    check_close(o::add_channel_bias(x, Tensor::from({1, 2}, {10, 20})),
                {11, 22, 13, 24});
    check_close(o::add_channel_bias(x, Tensor::from({2, 2}, {10, 20, 30, 40})),
                {11, 22, 33, 44});
    CHECK_THROWS_AS(o::add_channel_bias(x, Tensor::from({3, 2}, {0, 0, 0, 0, 0, 0})),
                    ContractError);
}

TEST_CASE("film applies per-(batch,channel) affine") {
    Tensor x = Tensor::from({1, 2, 1, 2}, {1, 2, 3, 4});
    Tensor gamma = Tensor::from({1, 2}, {2, 3});
    Tensor beta = Tensor::from({1, 2}, {1, -1});
    check_close(o::film(x, gamma, beta), {3, 5, 8, 11});
    CHECK_THROWS_AS(o::film(x, Tensor::zeros({2, 2}), beta), ContractError);
}

TEST_CASE("cond_embed means row pairs and zeroes the null pair") {
    Tensor table = Tensor::from({3, 2}, {1, 2, 3, 4, 5, 6});
    Tensor e = o::cond_embed(table, {{0, 2}, {1, 1}, {-1, -1}});
    check_close(e, {3, 4, 3, 4, 0, 0});
    CHECK_THROWS_AS(o::cond_embed(table, {{0, 3}}), ContractError);
    CHECK_THROWS_AS(o::cond_embed(Tensor::zeros({3}), {{0, 0}}), ContractError);
}

TEST_CASE("reshape and broadcast_rows") {
    Tensor x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor r = o::reshape(x, {3, 2});
    CHECK(r.shape() == std::vector<int>{3, 2});
    check_close(r, {1, 2, 3, 4, 5, 6});
    CHECK_THROWS_AS(o::reshape(x, {4, 2}), ContractError);

    Tensor row = Tensor::from({2}, {7, 8});
    check_close(o::broadcast_rows(row, 3), {7, 8, 7, 8, 7, 8});
    Tensor row2 = Tensor::from({1, 2}, {7, 8});
    Tensor b2 = o::broadcast_rows(row2, 2);
    CHECK(b2.shape() == std::vector<int>{2, 2});
    CHECK_THROWS_AS(o::broadcast_rows(x, 2), ContractError);
}

TEST_CASE("global_mean_pool and stack_batch") {
    Tensor x = Tensor::from({1, 2, 1, 2}, {1, 3, 10, 30});
    check_close(o::global_mean_pool(x), {2, 20});

    Tensor a = Tensor::from({1, 1, 2}, {1, 2});
    Tensor b = Tensor::from({1, 1, 2}, {3, 4});
    Tensor s = o::stack_batch({a, b});
    CHECK(s.shape() == std::vector<int>{2, 1, 1, 2});
    check_close(s, {1, 2, 3, 4});
    CHECK_THROWS_AS(o::stack_batch({}), ContractError);
    CHECK_THROWS_AS(o::global_mean_pool(Tensor::zeros({2, 2})), ContractError);
}

TEST_CASE("all_finite") {
    Tensor x = Tensor::from({2}, {1.0f, -2.0f});
    CHECK(o::all_finite(x));
    x.data()[0] = std::numeric_limits<float>::quiet_NaN();
    CHECK_FALSE(o::all_finite(x));
    x.data()[0] = std::numeric_limits<float>::infinity();
    CHECK_FALSE(o::all_finite(x));
}
