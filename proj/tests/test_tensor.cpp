#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "core/error.hpp"
#include "core/tensor.hpp"

using namespace steerlab;

TEST_CASE("factories and shape accessors") {
    Tensor z = Tensor::zeros({2, 3});
    CHECK(z.defined());
    CHECK(z.rank() == 2);
    CHECK(z.dim(0) == 2);
    CHECK(z.dim(1) == 3);
    CHECK(z.numel() == 6);
    for (float v : z.vec()) CHECK(v == 0.0f);

    Tensor f = Tensor::full({4}, 2.5f);
    for (float v : f.vec()) CHECK(v == 2.5f);

    Tensor s = Tensor::scalar(-1.25f);
    CHECK(s.rank() == 1);
    CHECK(s.numel() == 1);
    CHECK(s.item() == -1.25f);

    Tensor t = Tensor::from({2, 2}, {1, 2, 3, 4});
    CHECK(t.data()[3] == 4.0f);

    Tensor undef;
    CHECK_FALSE(undef.defined());
}

TEST_CASE("from rejects mismatched element counts") {
    CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), ContractError);
    CHECK_THROWS_AS(Tensor::from({3}, {1, 2, 3, 4}), ContractError);
}

TEST_CASE("item requires a scalar") {
    Tensor t = Tensor::zeros({2});
    CHECK_THROWS_AS(t.item(), ContractError);
}

TEST_CASE("copies alias the same storage") {
    Tensor a = Tensor::zeros({3});
    Tensor b = a;
    b.data()[1] = 7.0f;
    CHECK(a.data()[1] == 7.0f);
    CHECK(a.node() == b.node());
}

TEST_CASE("all_zero accepts both zero signs and nothing else") {
    Tensor t = Tensor::from({3}, {0.0f, -0.0f, 0.0f});
    CHECK(t.all_zero());
    t.data()[2] = 1e-30f;
    CHECK_FALSE(t.all_zero());
}

TEST_CASE("requires_grad drives grad allocation") {
    Tensor w = Tensor::zeros({2, 2}, true);
    CHECK(w.requires_grad());
    CHECK(w.needs_grad());
    CHECK_FALSE(w.has_grad());
    w.grad()[0] = 3.0f;
    CHECK(w.has_grad());
    w.zero_grad();
    CHECK(w.grad_vec()[0] == 0.0f);

    Tensor x = Tensor::zeros({2});
    CHECK_FALSE(x.requires_grad());
    x.set_requires_grad(true);
    CHECK(x.requires_grad());
    CHECK(x.needs_grad());
}

TEST_CASE("shape helpers") {
    CHECK(shape_numel({2, 3, 4}) == 24);
    CHECK(shape_str({2, 3}) == "[2,3]");
    CHECK(shape_numel({}) == 1);
}

TEST_CASE("backward contract violations") {
    Tensor v = Tensor::zeros({2});
    {
        TapeScope scope;
        CHECK_THROWS_AS(v.backward(), ContractError);  // non-scalar
    }
    Tensor s = Tensor::scalar(1.0f);
    CHECK_THROWS_AS(s.backward(), ContractError);  // no active tape
}

TEST_CASE("tape scopes nest and deactivate") {
    CHECK(GradTape::active() == nullptr);
    {
        TapeScope outer;
        CHECK(GradTape::active() == &outer.tape);
        {
            NoGradScope off;
            CHECK(GradTape::active() == nullptr);
            {
                TapeScope inner;
                CHECK(GradTape::active() == &inner.tape);
            }
            CHECK(GradTape::active() == nullptr);
        }
        CHECK(GradTape::active() == &outer.tape);
    }
    CHECK(GradTape::active() == nullptr);
}
