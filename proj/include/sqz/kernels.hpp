#pragma once

#include <complex>
#include <cstddef>

// Tight per-bin array operations used by the model evaluator, the synthesizer
// and the Welch estimator. Every operation has a scalar reference
// implementation and an AVX2 implementation selected at runtime; the two are
// bit-identical (both are compiled without FP contraction and the vector code
// performs the same IEEE operations in the same order).
namespace sqz::kernels {

enum class Mode {
  kAuto,    // pick AVX2 when the CPU supports it (default)
  kScalar,  // force the scalar reference path
  kAvx2,    // force the AVX2 path (throws if unsupported)
};

// True when the running CPU can execute the AVX2 path.
bool avx2_available();

// Select the implementation used by the operations below. Affects all
// subsequent calls process-wide; intended for startup or tests.
void set_mode(Mode m);

// The mode requests resolve to: kScalar or kAvx2.
Mode active_mode();

// out[i] = num / ((d0 - omega[i]^2) - i*gamma*omega[i])
// The shared Lorentzian response shape of every back-action/coupling
// function; callers pick `num` and `d0`.
void response(std::complex<double>* out, const double* omega, std::size_t n,
              double num, double d0, double gamma);

// out[i] = |x[i]|^2
void abs2(double* out, const std::complex<double>* x, std::size_t n);

// acc[i] += |x[i]|^2
void abs2_accum(double* acc, const std::complex<double>* x, std::size_t n);

// acc[i] += c[i] * x[i]
void mix_accum(std::complex<double>* acc, const std::complex<double>* c,
               const std::complex<double>* x, std::size_t n);

// acc[i] += a[i] * conj(b[i])
void mix_accum_conj(std::complex<double>* acc, const std::complex<double>* a,
                    const std::complex<double>* b, std::size_t n);

// acc[i] += c * x[i]
void scale_accum(std::complex<double>* acc, std::complex<double> c,
                 const std::complex<double>* x, std::size_t n);

}  // namespace sqz::kernels
