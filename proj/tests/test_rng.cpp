#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "core/rng.hpp"
#include "oracles.hpp"

using namespace steerlab;

TEST_CASE("raw engine matches mt19937_64 and the published vector") {
    std::mt19937_64 ref(42);
    Rng r(42);
    for (int i = 0; i < 4; i++) {
        uint64_t got = ref();
        CHECK(got == oracle::kRaw42[i]);
    }
    // Same engine drives uniform(); check via the frozen uniforms below.

    std::mt19937_64 def;  // default seed 5489
    uint64_t v = 0;
    for (int i = 0; i < 10000; i++) v = def();
    CHECK(v == oracle::kMt64Default10000th);
}

TEST_CASE("uniform matches frozen stream exactly") {
    Rng r(42);
    for (int i = 0; i < 4; i++) {
        double u = r.uniform();
        CHECK(u == oracle::kUniform42[i]);  // exact: integer >> and * 2^-53
        CHECK(u > 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("uniform never returns the endpoints") {
    Rng r(1);
    for (int i = 0; i < 100000; i++) {
        double u = r.uniform();
        CHECK(u > 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("normal stream matches frozen Box-Muller values") {
    // normal() burns a full pair per call: z0 of pair 1, then z0 of pair 2.
    Rng r(42);
    CHECK(r.normal() == doctest::Approx(oracle::kNormal42[0]).epsilon(1e-15));
    CHECK(r.normal() == doctest::Approx(oracle::kNormal42[2]).epsilon(1e-15));

    // fill_normal consumes the identical stream, odd lengths included.
    Rng r2(42);
    float buf3[3];
    r2.fill_normal(buf3, 3);
    for (int i = 0; i < 3; i++)
        CHECK(buf3[i] == float(oracle::kNormal42[i]));

    Rng r3(42);
    float buf4[4];
    r3.fill_normal(buf4, 4);
    for (int i = 0; i < 4; i++)
        CHECK(buf4[i] == float(oracle::kNormal42[i]));
}

TEST_CASE("normal moments are sane") {
    Rng r(3);
    const int n = 200000;
    double s = 0, s2 = 0;
    for (int i = 0; i < n; i++) {
        double v = r.normal();
        s += v;
        s2 += v * v;
    }
    double mean = s / n, var = s2 / n - mean * mean;
    CHECK(std::fabs(mean) < 0.01);
    CHECK(std::fabs(var - 1.0) < 0.02);
}

TEST_CASE("uniform_int matches frozen values and stays in range") {
    Rng r(7);
    for (int i = 0; i < 4; i++) CHECK(r.uniform_int(1, 1000) == oracle::kUniformInt7[i]);

    Rng r2(11);
    for (int i = 0; i < 10000; i++) {
        int v = r2.uniform_int(-3, 5);
        CHECK(v >= -3);
        CHECK(v <= 5);
    }
    Rng r3(1);
    CHECK(r3.uniform_int(9, 9) == 9);  // degenerate span
}

TEST_CASE("mix is the splitmix64 finalizer") {
    CHECK(Rng::mix(42) == oracle::kMix42);
    CHECK(Rng::mix(0) == oracle::kMix0);
    CHECK(Rng::mix(1) != Rng::mix(2));
}

TEST_CASE("derive seeds a decorrelated engine deterministically") {
    Rng a = Rng::derive(42, 7);
    Rng b(oracle::kDeriveSeed42_7);
    for (int i = 0; i < 8; i++) CHECK(a.uniform() == b.uniform());

    // Different streams from one seed diverge immediately.
    Rng s1 = Rng::derive(42, 1);
    Rng s2 = Rng::derive(42, 2);
    CHECK(s1.uniform() != s2.uniform());

    // And the derivation is reproducible.
    Rng c = Rng::derive(42, 7);
    Rng d = Rng::derive(42, 7);
    for (int i = 0; i < 4; i++) CHECK(c.uniform() == d.uniform());
}
