#pragma once

#include <complex>
#include <cstddef>

// Private declarations shared by the scalar and AVX2 translation units.
//
// The elementwise helpers below define the exact IEEE operation sequence for
// one element. Both implementations use them for loop tails, and the AVX2
// bodies replicate the same sequence lane-wise, so results are bit-identical
// across paths. Both translation units are compiled with -ffp-contract=off.
namespace sqz::kernels::detail {

inline void response_one(double w, double num, double d0, double gamma,
                         double* out) {
  const double w2 = w * w;
  const double dre = d0 - w2;
  const double dim = -(gamma * w);
  const double den = dre * dre + dim * dim;
  const double s = num / den;
  out[0] = s * dre;
  out[1] = -(s * dim);
}

inline double abs2_one(const double* x) { return x[0] * x[0] + x[1] * x[1]; }

// (acc.re, acc.im) += (c.re, c.im) * (x.re, x.im)
inline void mix_accum_one(double* acc, const double* c, const double* x) {
  const double pr = c[0] * x[0] - c[1] * x[1];
  const double pi = c[0] * x[1] + c[1] * x[0];
  acc[0] += pr;
  acc[1] += pi;
}

// (acc.re, acc.im) += (a.re, a.im) * conj(b.re, b.im)
inline void mix_accum_conj_one(double* acc, const double* a, const double* b) {
  const double nbim = -b[1];
  const double pr = a[0] * b[0] - a[1] * nbim;
  const double pi = a[0] * nbim + a[1] * b[0];
  acc[0] += pr;
  acc[1] += pi;
}

}  // namespace sqz::kernels::detail

namespace sqz::kernels::scalar {
void response(std::complex<double>* out, const double* omega, std::size_t n,
              double num, double d0, double gamma);
void abs2(double* out, const std::complex<double>* x, std::size_t n);
void abs2_accum(double* acc, const std::complex<double>* x, std::size_t n);
void mix_accum(std::complex<double>* acc, const std::complex<double>* c,
               const std::complex<double>* x, std::size_t n);
void mix_accum_conj(std::complex<double>* acc, const std::complex<double>* a,
                    const std::complex<double>* b, std::size_t n);
void scale_accum(std::complex<double>* acc, std::complex<double> c,
                 const std::complex<double>* x, std::size_t n);
}  // namespace sqz::kernels::scalar

namespace sqz::kernels::avx2 {
void response(std::complex<double>* out, const double* omega, std::size_t n,
              double num, double d0, double gamma);
void abs2(double* out, const std::complex<double>* x, std::size_t n);
void abs2_accum(double* acc, const std::complex<double>* x, std::size_t n);
void mix_accum(std::complex<double>* acc, const std::complex<double>* c,
               const std::complex<double>* x, std::size_t n);
void mix_accum_conj(std::complex<double>* acc, const std::complex<double>* a,
                    const std::complex<double>* b, std::size_t n);
void scale_accum(std::complex<double>* acc, std::complex<double> c,
                 const std::complex<double>* x, std::size_t n);
}  // namespace sqz::kernels::avx2
