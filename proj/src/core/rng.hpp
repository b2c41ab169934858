#pragma once
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace steerlab {

// All randomness in the lab flows through this wrapper. Distributions are
// hand-rolled (Box-Muller over fixed 53-bit uniforms) rather than taken from
// <random>, because the standard only pins the raw engine — distribution
// output is implementation-defined and would break cross-toolchain
// reproducibility of checkpoints and sweeps.
class Rng {
  public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t raw() { return gen_(); }

    // Uniform in (0,1), never exactly 0 or 1 (safe for log()).
    double uniform() { return (double((gen_() >> 11)) + 0.5) * 0x1p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Inclusive bounds. Modulo mapping: bias is ~2^-64 per draw, irrelevant
    // at lab scale, and keeps the draw count fixed (one word per value).
    int uniform_int(int lo, int hi) {
        return lo + int(gen_() % uint64_t(hi - lo + 1));
    }

    // Standard normal, Box-Muller cosine branch. Pairs are used when filling
    // buffers; a lone draw consumes a full pair to keep the stream alignment
    // independent of call pattern.
    double normal() {
        double z0, z1;
        normal_pair(z0, z1);
        return z0;
    }

    void fill_normal(float* out, size_t n) {
        size_t i = 0;
        while (i + 1 < n) {
            double z0, z1;
            normal_pair(z0, z1);
            out[i++] = float(z0);
            out[i++] = float(z1);
        }
        if (i < n) out[i] = float(normal());
    }

    void fill_normal(std::vector<float>& out) { fill_normal(out.data(), out.size()); }

    // splitmix64 finalizer: decorrelates nearby seeds.
    static uint64_t mix(uint64_t x) {
        x += 0x9E3779B97F4A7C15ull;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
        return x ^ (x >> 31);
    }

    // Independent deterministic stream for (seed, stream id). Used to give
    // every split/loop its own generator so adding a consumer in one place
    // never shifts draws anywhere else.
    static Rng derive(uint64_t seed, uint64_t stream) {
        return Rng(mix(seed ^ mix(stream)));
    }

  private:
    void normal_pair(double& z0, double& z1) {
        double u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double th = 2.0 * M_PI * u2;
        z0 = r * std::cos(th);
        z1 = r * std::sin(th);
    }

    std::mt19937_64 gen_;
};

}  // namespace steerlab
