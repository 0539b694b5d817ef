// AVX2 implementations of the per-bin kernels. Compiled with -mavx2 and
// -ffp-contract=off; only ever executed after a runtime CPU check.
//
// Bit-equivalence with the scalar path is a hard requirement: every lane
// performs the same IEEE-754 multiplies/adds/divides in the same order as the
// corresponding scalar helper, no FMA instructions are used, and loop tails
// reuse the scalar elementwise helpers.

#include "kernels_impl.hpp"

#if defined(__AVX2__)

#include <immintrin.h>

namespace sqz::kernels::avx2 {

namespace {

inline const double* raw(const std::complex<double>* p) {
  return reinterpret_cast<const double*>(p);
}
inline double* raw(std::complex<double>* p) { return reinterpret_cast<double*>(p); }

inline __m256d negate(__m256d v) {
  return _mm256_xor_pd(v, _mm256_set1_pd(-0.0));
}

// acc2 += c * x where c is given as split re/im broadcast-style vectors
// ([c0r,c0r,c1r,c1r] / [c0i,c0i,c1i,c1i]) and x holds two interleaved
// complex values. Matches detail::mix_accum_one exactly, lane-wise.
inline __m256d cmul(__m256d cre, __m256d cim, __m256d x) {
  const __m256d xsw = _mm256_permute_pd(x, 0x5);  // [xi, xr] per complex
  const __m256d p1 = _mm256_mul_pd(cre, x);       // [cr*xr, cr*xi]
  const __m256d p2 = _mm256_mul_pd(cim, xsw);     // [ci*xi, ci*xr]
  return _mm256_addsub_pd(p1, p2);                // [cr*xr - ci*xi, cr*xi + ci*xr]
}

}  // namespace

void response(std::complex<double>* out, const double* omega, std::size_t n,
              double num, double d0, double gamma) {
  double* o = raw(out);
  const __m256d vnum = _mm256_set1_pd(num);
  const __m256d vd0 = _mm256_set1_pd(d0);
  const __m256d vg = _mm256_set1_pd(gamma);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d w = _mm256_loadu_pd(omega + i);
    const __m256d w2 = _mm256_mul_pd(w, w);
    const __m256d dre = _mm256_sub_pd(vd0, w2);
    const __m256d dim = negate(_mm256_mul_pd(vg, w));
    const __m256d den =
        _mm256_add_pd(_mm256_mul_pd(dre, dre), _mm256_mul_pd(dim, dim));
    const __m256d s = _mm256_div_pd(vnum, den);
    const __m256d re = _mm256_mul_pd(s, dre);
    const __m256d im = negate(_mm256_mul_pd(s, dim));
    const __m256d lo = _mm256_unpacklo_pd(re, im);  // [r0,i0,r2,i2]
    const __m256d hi = _mm256_unpackhi_pd(re, im);  // [r1,i1,r3,i3]
    _mm256_storeu_pd(o + 2 * i, _mm256_permute2f128_pd(lo, hi, 0x20));
    _mm256_storeu_pd(o + 2 * i + 4, _mm256_permute2f128_pd(lo, hi, 0x31));
  }
  for (; i < n; ++i) detail::response_one(omega[i], num, d0, gamma, o + 2 * i);
}

namespace {

// Shared body for abs2 / abs2_accum: |x|^2 for 4 complex values.
inline __m256d abs2_quad(const double* p) {
  const __m256d a = _mm256_loadu_pd(p);      // [r0,i0,r1,i1]
  const __m256d b = _mm256_loadu_pd(p + 4);  // [r2,i2,r3,i3]
  const __m256d a2 = _mm256_mul_pd(a, a);
  const __m256d b2 = _mm256_mul_pd(b, b);
  // hadd -> [|x0|^2, |x2|^2, |x1|^2, |x3|^2]; permute back into order.
  const __m256d h = _mm256_hadd_pd(a2, b2);
  return _mm256_permute4x64_pd(h, _MM_SHUFFLE(3, 1, 2, 0));
}

}  // namespace

void abs2(double* out, const std::complex<double>* x, std::size_t n) {
  const double* p = raw(x);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, abs2_quad(p + 2 * i));
  for (; i < n; ++i) out[i] = detail::abs2_one(p + 2 * i);
}

void abs2_accum(double* acc, const std::complex<double>* x, std::size_t n) {
  const double* p = raw(x);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d prev = _mm256_loadu_pd(acc + i);
    _mm256_storeu_pd(acc + i, _mm256_add_pd(prev, abs2_quad(p + 2 * i)));
  }
  for (; i < n; ++i) acc[i] += detail::abs2_one(p + 2 * i);
}

void mix_accum(std::complex<double>* acc, const std::complex<double>* c,
               const std::complex<double>* x, std::size_t n) {
  double* a = raw(acc);
  const double* cp = raw(c);
  const double* xp = raw(x);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const __m256d cv = _mm256_loadu_pd(cp + 2 * i);
    const __m256d xv = _mm256_loadu_pd(xp + 2 * i);
    const __m256d cre = _mm256_movedup_pd(cv);
    const __m256d cim = _mm256_permute_pd(cv, 0xF);
    const __m256d prod = cmul(cre, cim, xv);
    const __m256d av = _mm256_loadu_pd(a + 2 * i);
    _mm256_storeu_pd(a + 2 * i, _mm256_add_pd(av, prod));
  }
  for (; i < n; ++i) detail::mix_accum_one(a + 2 * i, cp + 2 * i, xp + 2 * i);
}

void mix_accum_conj(std::complex<double>* acc, const std::complex<double>* a,
                    const std::complex<double>* b, std::size_t n) {
  double* ac = raw(acc);
  const double* ap = raw(a);
  const double* bp = raw(b);
  // Flip the sign of the imaginary lanes of b, then multiply as usual.
  const __m256d conj_mask = _mm256_set_pd(-0.0, 0.0, -0.0, 0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const __m256d av = _mm256_loadu_pd(ap + 2 * i);
    const __m256d bv = _mm256_xor_pd(_mm256_loadu_pd(bp + 2 * i), conj_mask);
    const __m256d are = _mm256_movedup_pd(av);
    const __m256d aim = _mm256_permute_pd(av, 0xF);
    const __m256d prod = cmul(are, aim, bv);
    const __m256d pv = _mm256_loadu_pd(ac + 2 * i);
    _mm256_storeu_pd(ac + 2 * i, _mm256_add_pd(pv, prod));
  }
  for (; i < n; ++i) detail::mix_accum_conj_one(ac + 2 * i, ap + 2 * i, bp + 2 * i);
}

void scale_accum(std::complex<double>* acc, std::complex<double> c,
                 const std::complex<double>* x, std::size_t n) {
  double* a = raw(acc);
  const double* xp = raw(x);
  const __m256d cre = _mm256_set1_pd(c.real());
  const __m256d cim = _mm256_set1_pd(c.imag());
  const double cc[2] = {c.real(), c.imag()};
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const __m256d xv = _mm256_loadu_pd(xp + 2 * i);
    const __m256d prod = cmul(cre, cim, xv);
    const __m256d av = _mm256_loadu_pd(a + 2 * i);
    _mm256_storeu_pd(a + 2 * i, _mm256_add_pd(av, prod));
  }
  for (; i < n; ++i) detail::mix_accum_one(a + 2 * i, cc, xp + 2 * i);
}

}  // namespace sqz::kernels::avx2

#else  // !defined(__AVX2__)

// Non-x86 (or non-AVX2) build: keep the symbols linkable; the dispatcher
// never routes here because avx2_available() reports false.
namespace sqz::kernels::avx2 {

void response(std::complex<double>* out, const double* omega, std::size_t n,
              double num, double d0, double gamma) {
  scalar::response(out, omega, n, num, d0, gamma);
}
void abs2(double* out, const std::complex<double>* x, std::size_t n) {
  scalar::abs2(out, x, n);
}
void abs2_accum(double* acc, const std::complex<double>* x, std::size_t n) {
  scalar::abs2_accum(acc, x, n);
}
void mix_accum(std::complex<double>* acc, const std::complex<double>* c,
               const std::complex<double>* x, std::size_t n) {
  scalar::mix_accum(acc, c, x, n);
}
void mix_accum_conj(std::complex<double>* acc, const std::complex<double>* a,
                    const std::complex<double>* b, std::size_t n) {
  scalar::mix_accum_conj(acc, a, b, n);
}
void scale_accum(std::complex<double>* acc, std::complex<double> c,
                 const std::complex<double>* x, std::size_t n) {
  scalar::scale_accum(acc, c, x, n);
}

}  // namespace sqz::kernels::avx2

#endif
