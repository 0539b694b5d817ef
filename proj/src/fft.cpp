#include "sqz/fft.hpp"

#include <fftw3.h>

#include <cstring>
#include <map>
#include <mutex>

#include "sqz/types.hpp"

namespace sqz::fft {

namespace {

// Plans are cached per transform size and shared across threads; creation is
// serialized (the FFTW planner is not thread-safe, execution is).
std::mutex g_plan_mutex;
std::map<std::size_t, fftw_plan>& r2c_plans() {
  static std::map<std::size_t, fftw_plan> m;
  return m;
}
std::map<std::size_t, fftw_plan>& c2r_plans() {
  static std::map<std::size_t, fftw_plan> m;
  return m;
}

// Per-thread staging buffers from fftw_malloc (consistent alignment, as the
// new-array execute interface requires). Buffers above the keep limit are
// released after use so one huge transform does not pin memory forever.
constexpr std::size_t kKeepLimitDoubles = std::size_t{1} << 22;  // 32 MiB

struct Buffers {
  double* re = nullptr;
  std::size_t re_cap = 0;
  fftw_complex* cx = nullptr;
  std::size_t cx_cap = 0;

  ~Buffers() { release(); }

  void release() {
    if (re) fftw_free(re);
    if (cx) fftw_free(cx);
    re = nullptr;
    cx = nullptr;
    re_cap = cx_cap = 0;
  }

  double* real(std::size_t n) {
    if (re_cap < n) {
      if (re) fftw_free(re);
      re = fftw_alloc_real(n);
      if (!re) throw Error("FFT buffer allocation failed");
      re_cap = n;
    }
    return re;
  }

  fftw_complex* cplx(std::size_t n) {
    if (cx_cap < n) {
      if (cx) fftw_free(cx);
      cx = fftw_alloc_complex(n);
      if (!cx) throw Error("FFT buffer allocation failed");
      cx_cap = n;
    }
    return cx;
  }

  void maybe_shrink() {
    if (re_cap > kKeepLimitDoubles || 2 * cx_cap > kKeepLimitDoubles) release();
  }
};

thread_local Buffers t_buf;

void check_size(std::size_t n) {
  if (n < 2 || (n % 2) != 0)
    throw ValidationError("FFT size must be even and >= 2, got " + std::to_string(n));
}

fftw_plan get_r2c(std::size_t n, double* in, fftw_complex* out) {
  std::lock_guard<std::mutex> lock(g_plan_mutex);
  auto& plans = r2c_plans();
  auto it = plans.find(n);
  if (it != plans.end()) return it->second;
  fftw_plan p = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
  if (!p) throw Error("FFTW r2c planning failed for n=" + std::to_string(n));
  plans.emplace(n, p);
  return p;
}

fftw_plan get_c2r(std::size_t n, fftw_complex* in, double* out) {
  std::lock_guard<std::mutex> lock(g_plan_mutex);
  auto& plans = c2r_plans();
  auto it = plans.find(n);
  if (it != plans.end()) return it->second;
  fftw_plan p = fftw_plan_dft_c2r_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
  if (!p) throw Error("FFTW c2r planning failed for n=" + std::to_string(n));
  plans.emplace(n, p);
  return p;
}

}  // namespace

void real_to_complex(const double* in, std::complex<double>* out, std::size_t n) {
  check_size(n);
  const std::size_t nb = n / 2 + 1;
  double* rin = t_buf.real(n);
  fftw_complex* cout = t_buf.cplx(nb);
  std::memcpy(rin, in, n * sizeof(double));
  fftw_plan p = get_r2c(n, rin, cout);
  fftw_execute_dft_r2c(p, rin, cout);
  std::memcpy(static_cast<void*>(out), cout, nb * sizeof(fftw_complex));
  t_buf.maybe_shrink();
}

void complex_to_real(const std::complex<double>* spec, double* out, std::size_t n) {
  check_size(n);
  const std::size_t nb = n / 2 + 1;
  fftw_complex* cin = t_buf.cplx(nb);
  double* rout = t_buf.real(n);
  std::memcpy(cin, spec, nb * sizeof(fftw_complex));
  fftw_plan p = get_c2r(n, cin, rout);
  fftw_execute_dft_c2r(p, cin, rout);  // clobbers cin (staged copy)
  std::memcpy(out, rout, n * sizeof(double));
  t_buf.maybe_shrink();
}

void cleanup() {
  std::lock_guard<std::mutex> lock(g_plan_mutex);
  for (auto& [n, p] : r2c_plans()) fftw_destroy_plan(p);
  for (auto& [n, p] : c2r_plans()) fftw_destroy_plan(p);
  r2c_plans().clear();
  c2r_plans().clear();
  t_buf.release();
}

}  // namespace sqz::fft
