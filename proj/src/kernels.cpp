#include "sqz/kernels.hpp"

#include <atomic>

#include "kernels_impl.hpp"
#include "sqz/types.hpp"

namespace sqz::kernels {

namespace scalar {

namespace {
// std::complex<double> is layout-compatible with double[2] (guaranteed by the
// standard); all kernels work on the raw representation.
inline const double* raw(const std::complex<double>* p) {
  return reinterpret_cast<const double*>(p);
}
inline double* raw(std::complex<double>* p) { return reinterpret_cast<double*>(p); }
}  // namespace

void response(std::complex<double>* out, const double* omega, std::size_t n,
              double num, double d0, double gamma) {
  double* o = raw(out);
  for (std::size_t i = 0; i < n; ++i) detail::response_one(omega[i], num, d0, gamma, o + 2 * i);
}

void abs2(double* out, const std::complex<double>* x, std::size_t n) {
  const double* p = raw(x);
  for (std::size_t i = 0; i < n; ++i) out[i] = detail::abs2_one(p + 2 * i);
}

void abs2_accum(double* acc, const std::complex<double>* x, std::size_t n) {
  const double* p = raw(x);
  for (std::size_t i = 0; i < n; ++i) acc[i] += detail::abs2_one(p + 2 * i);
}

void mix_accum(std::complex<double>* acc, const std::complex<double>* c,
               const std::complex<double>* x, std::size_t n) {
  double* a = raw(acc);
  const double* cp = raw(c);
  const double* xp = raw(x);
  for (std::size_t i = 0; i < n; ++i)
    detail::mix_accum_one(a + 2 * i, cp + 2 * i, xp + 2 * i);
}

void mix_accum_conj(std::complex<double>* acc, const std::complex<double>* a,
                    const std::complex<double>* b, std::size_t n) {
  double* ac = raw(acc);
  const double* ap = raw(a);
  const double* bp = raw(b);
  for (std::size_t i = 0; i < n; ++i)
    detail::mix_accum_conj_one(ac + 2 * i, ap + 2 * i, bp + 2 * i);
}

void scale_accum(std::complex<double>* acc, std::complex<double> c,
                 const std::complex<double>* x, std::size_t n) {
  double* a = raw(acc);
  const double* xp = raw(x);
  const double cc[2] = {c.real(), c.imag()};
  for (std::size_t i = 0; i < n; ++i) detail::mix_accum_one(a + 2 * i, cc, xp + 2 * i);
}

}  // namespace scalar

namespace {

std::atomic<Mode> g_requested{Mode::kAuto};

inline bool use_avx2() {
  const Mode m = g_requested.load(std::memory_order_relaxed);
  if (m == Mode::kScalar) return false;
  if (m == Mode::kAvx2) return true;
  static const bool avail = avx2_available();
  return avail;
}

}  // namespace

bool avx2_available() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2") != 0;
#else
  return false;
#endif
}

void set_mode(Mode m) {
  if (m == Mode::kAvx2 && !avx2_available())
    throw ValidationError("AVX2 kernel mode requested but the CPU does not support AVX2");
  g_requested.store(m, std::memory_order_relaxed);
}

Mode active_mode() { return use_avx2() ? Mode::kAvx2 : Mode::kScalar; }

void response(std::complex<double>* out, const double* omega, std::size_t n,
              double num, double d0, double gamma) {
  if (use_avx2())
    avx2::response(out, omega, n, num, d0, gamma);
  else
    scalar::response(out, omega, n, num, d0, gamma);
}

void abs2(double* out, const std::complex<double>* x, std::size_t n) {
  if (use_avx2())
    avx2::abs2(out, x, n);
  else
    scalar::abs2(out, x, n);
}

void abs2_accum(double* acc, const std::complex<double>* x, std::size_t n) {
  if (use_avx2())
    avx2::abs2_accum(acc, x, n);
  else
    scalar::abs2_accum(acc, x, n);
}

void mix_accum(std::complex<double>* acc, const std::complex<double>* c,
               const std::complex<double>* x, std::size_t n) {
  if (use_avx2())
    avx2::mix_accum(acc, c, x, n);
  else
    scalar::mix_accum(acc, c, x, n);
}

void mix_accum_conj(std::complex<double>* acc, const std::complex<double>* a,
                    const std::complex<double>* b, std::size_t n) {
  if (use_avx2())
    avx2::mix_accum_conj(acc, a, b, n);
  else
    scalar::mix_accum_conj(acc, a, b, n);
}

void scale_accum(std::complex<double>* acc, std::complex<double> c,
                 const std::complex<double>* x, std::size_t n) {
  if (use_avx2())
    avx2::scale_accum(acc, c, x, n);
  else
    scalar::scale_accum(acc, c, x, n);
}

}  // namespace sqz::kernels
