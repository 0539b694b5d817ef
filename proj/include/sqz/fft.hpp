#pragma once

#include <complex>
#include <cstddef>

// Thin wrapper around FFTW's 1-D real transforms with cached plans.
//
// Conventions (FFTW's, unnormalized):
//   real_to_complex: out[k] = sum_n in[n] * exp(-2*pi*i*k*n/N), k = 0..N/2
//   complex_to_real: out[n] = sum_k (Hermitian expansion of spec), no 1/N
// Callers apply their own normalization. Inputs are never clobbered (data is
// staged through internal aligned buffers). Thread-safe; plans are shared.
namespace sqz::fft {

// Forward transform of n real samples into n/2+1 complex bins.
void real_to_complex(const double* in, std::complex<double>* out, std::size_t n);

// Inverse transform of n/2+1 complex bins into n real samples.
void complex_to_real(const std::complex<double>* spec, double* out, std::size_t n);

// Releases cached plans and buffers (optional; useful for leak checkers).
void cleanup();

}  // namespace sqz::fft
