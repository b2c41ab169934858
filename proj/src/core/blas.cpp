#include "core/blas.hpp"

#include <dlfcn.h>

#include <cstdlib>
#include <cstring>
#include <mutex>
#include <string>

namespace steerlab::blas {
namespace {

typedef void (*cblas_sgemm_fn)(int order, int trans_a, int trans_b, int m,
                               int n, int k, float alpha, const float* a,
                               int lda, const float* b, int ldb, float beta,
                               float* c, int ldc);

constexpr int kRowMajor = 101;
constexpr int kNoTrans = 111;
constexpr int kTrans = 112;

struct Backend {
    cblas_sgemm_fn sgemm = nullptr;
    std::string name = "fallback";
};

Backend load_backend() {
    Backend be;
    // OpenBLAS picks its kernel set from CPUID in a load-time constructor,
    // and on this family of VMs the probe lands on a generic pre-AVX kernel
    // (~3x slower than the native one). Loading the library ourselves after
    // setting OPENBLAS_CORETYPE sidesteps that; an explicit user setting
    // still wins.
#if defined(__x86_64__)
    if (__builtin_cpu_supports("avx512f"))
        setenv("OPENBLAS_CORETYPE", "SKYLAKEX", /*overwrite=*/0);
    else if (__builtin_cpu_supports("avx2"))
        setenv("OPENBLAS_CORETYPE", "HASWELL", 0);
#endif
    setenv("OPENBLAS_NUM_THREADS", "1", 0);
    void* h = dlopen("libopenblas.so.0", RTLD_NOW | RTLD_LOCAL);
    if (!h) h = dlopen("libopenblas.so", RTLD_NOW | RTLD_LOCAL);
    if (!h) return be;
    auto fn = reinterpret_cast<cblas_sgemm_fn>(dlsym(h, "cblas_sgemm"));
    if (!fn) return be;
    if (auto set_nt =
            reinterpret_cast<void (*)(int)>(dlsym(h, "openblas_set_num_threads")))
        set_nt(1);  // determinism requires a fixed reduction order
    be.sgemm = fn;
    be.name = "openblas";
    if (auto core =
            reinterpret_cast<char* (*)()>(dlsym(h, "openblas_get_corename")))
        be.name += std::string(":") + core();
    return be;
}

const Backend& backend_instance() {
    static Backend be = load_backend();
    return be;
}

// Plain blocked kernel, used only when OpenBLAS is absent. Fixed loop order.
void fallback_sgemm(bool trans_a, bool trans_b, int m, int n, int k,
                    float alpha, const float* a, int lda, const float* b,
                    int ldb, float beta, float* c, int ldc) {
    auto at = [&](int i, int p) { return trans_a ? a[p * lda + i] : a[i * lda + p]; };
    auto bt = [&](int p, int j) { return trans_b ? b[j * ldb + p] : b[p * ldb + j]; };
    for (int i = 0; i < m; i++) {
        for (int j = 0; j < n; j++) {
            float acc = 0.0f;
            for (int p = 0; p < k; p++) acc += at(i, p) * bt(p, j);
            float* out = &c[i * ldc + j];
            *out = alpha * acc + (beta == 0.0f ? 0.0f : beta * *out);
        }
    }
}

}  // namespace

void sgemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
           const float* a, int lda, const float* b, int ldb, float beta,
           float* c, int ldc) {
    if (m == 0 || n == 0) return;
    const Backend& be = backend_instance();
    if (be.sgemm) {
        be.sgemm(kRowMajor, trans_a ? kTrans : kNoTrans,
                 trans_b ? kTrans : kNoTrans, m, n, k, alpha, a, lda, b, ldb,
                 beta, c, ldc);
    } else {
        fallback_sgemm(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta,
                       c, ldc);
    }
}

const char* backend() { return backend_instance().name.c_str(); }

}  // namespace steerlab::blas
