#pragma once

namespace steerlab::blas {

// Single-precision GEMM: C = alpha * op(A) * op(B) + beta * C, row-major.
// Backed by OpenBLAS when available (loaded at runtime), otherwise a
// portable blocked kernel. Both paths are single-threaded and use a fixed
// reduction order, so results are bit-reproducible run to run.
void sgemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha,
           const float* a, int lda, const float* b, int ldb, float beta,
           float* c, int ldc);

// Name of the selected backend ("openblas:<corename>" or "fallback").
const char* backend();

}  // namespace steerlab::blas
