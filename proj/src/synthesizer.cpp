#include "sqz/synthesizer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <exception>
#include <thread>

#include "sqz/digest.hpp"
#include "sqz/fft.hpp"
#include "sqz/kernels.hpp"
#include "sqz/rng.hpp"
#include "sqz/spectral_model.hpp"

namespace sqz::synth {

namespace {

using cplx = std::complex<double>;

// Independent noise sources, one RNG stream each. The enum order fixes the
// stream indices and therefore the bit-exact output for a given seed.
enum Bath : std::size_t {
  kV1x = 0,  // squeezed vacuum pair, amplitude quadratures
  kV1p,      // squeezed vacuum pair, phase quadratures
  kV2x,
  kV2p,
  kW0,    // input-coupling vacuum, amplitude
  kWpi2,  // input-coupling vacuum, phase
  kFth,   // narrowband thermal force
  kFbb,   // broadband force
  kVout,  // idler output-port vacuum
  kVs,    // signal-path vacuum
  kBathCount
};

constexpr std::size_t kBlockBins = 65536;

void zero_fill(std::vector<cplx>& v, std::size_t n) {
  v.assign(n, cplx(0.0, 0.0));
}

}  // namespace

std::size_t SynthesisConfig::sample_count() const {
  const double exact = sample_rate_hz * duration_s;
  const auto n = static_cast<long long>(std::llround(exact));
  if (!(exact > 0.0) || std::abs(exact - static_cast<double>(n)) > 1e-6)
    throw ValidationError("sample_rate * duration must be a positive integer sample count");
  if (n < 16 || n % 2 != 0)
    throw ValidationError("sample count must be an even integer >= 16");
  return static_cast<std::size_t>(n);
}

std::vector<double> SynthesisConfig::resolved_thetas() const {
  if (theta_s_list.empty()) return {det.theta_s};
  return theta_s_list;
}

std::uint64_t SynthesisConfig::digest() const {
  digest::Fnv1a h;
  h.f64(sample_rate_hz);
  h.f64(duration_s);
  h.u64(seed);
  h.f64(spin.larmor);
  h.f64(spin.readout);
  h.f64(spin.decay);
  h.f64(spin.bb_readout);
  h.f64(spin.bb_decay);
  h.f64(spin.n_th);
  h.f64(spin.n_bb);
  h.f64(epr.r);
  h.f64(epr.eta_s);
  h.f64(epr.eta_i_in);
  h.f64(epr.eta_i_out);
  h.f64(det.theta_s);
  h.f64(det.delta_theta_i);
  const auto thetas = resolved_thetas();
  h.u64(thetas.size());
  for (double t : thetas) h.f64(t);
  return h.value();
}

void SynthesisConfig::validate() const {
  if (!std::isfinite(sample_rate_hz) || sample_rate_hz <= 0.0)
    throw ValidationError("sample_rate must be finite and > 0");
  if (!std::isfinite(duration_s) || duration_s <= 0.0)
    throw ValidationError("duration must be finite and > 0");
  spin.validate();
  epr.validate();
  det.validate();
  for (double t : theta_s_list)
    if (!std::isfinite(t)) throw ValidationError("theta_s_list entries must be finite");
  (void)sample_count();
}

void TimeSeriesPair::validate() const {
  if (signal.empty() || signal.size() != idler.size())
    throw ValidationError("time series pair needs equal, non-zero channel lengths");
  if (!std::isfinite(sample_rate_hz) || sample_rate_hz <= 0.0)
    throw ValidationError("time series sample_rate must be finite and > 0");
  for (std::size_t i = 0; i < signal.size(); ++i)
    if (!std::isfinite(signal[i]) || !std::isfinite(idler[i]))
      throw DataError("non-finite sample at index " + std::to_string(i), i + 1);
}

TimeSeriesPair SynthesisResult::pair(std::size_t theta_index) const {
  if (theta_index >= signals.size())
    throw ValidationError("theta_index out of range");
  TimeSeriesPair p;
  p.signal = signals[theta_index];
  p.idler = idler;
  p.sample_rate_hz = sample_rate_hz;
  p.provenance = provenance;
  return p;
}

unsigned resolve_worker_count() {
  if (const char* env = std::getenv("SQZ_WORKERS")) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (end && *end == '\0' && v >= 1)
      return static_cast<unsigned>(std::min(v, 1024ul));
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

SynthesisResult synthesize(const SynthesisConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.sample_count();
  const std::size_t nb = n / 2 + 1;
  const auto thetas = cfg.resolved_thetas();
  const std::size_t nt = thetas.size();
  const double fs = cfg.sample_rate_hz;

  // Frequency-domain accumulators: [0] is the idler, [1 + j] the signal at
  // thetas[j]. Workers write disjoint bin ranges, so no synchronization is
  // needed.
  std::vector<std::vector<cplx>> acc(nt + 1);
  for (auto& a : acc) zero_fill(a, nb);

  // Scalar couplings of the transfer relations.
  const double er = std::exp(cfg.epr.r);
  const double emr = std::exp(-cfg.epr.r);
  constexpr double inv_sqrt2 = 0.70710678118654752440084436210485;
  const double a_in = std::sqrt(cfg.epr.eta_i_out * cfg.epr.eta_i_in);
  const double b_in = std::sqrt(cfg.epr.eta_i_out * (1.0 - cfg.epr.eta_i_in));
  const double c_out = std::sqrt(1.0 - cfg.epr.eta_i_out);
  const double cdt = std::cos(cfg.det.delta_theta_i);
  const double c_th = std::sqrt(cfg.epr.eta_i_out) * cdt *
                      std::sqrt(2.0 * cfg.spin.n_th + 1.0);
  const double c_bb = std::sqrt(cfg.epr.eta_i_out) * cdt *
                      std::sqrt(2.0 * cfg.spin.n_bb + 1.0);
  const double root_eta_s = std::sqrt(cfg.epr.eta_s);
  const double c_vs = std::sqrt(1.0 - cfg.epr.eta_s);
  std::vector<double> sin_c(nt), cos_c(nt);
  for (std::size_t j = 0; j < nt; ++j) {
    sin_c[j] = root_eta_s * std::sin(thetas[j]);
    cos_c[j] = root_eta_s * std::cos(thetas[j]);
  }

  const std::size_t nblocks = (nb + kBlockBins - 1) / kBlockBins;
  const unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(resolve_worker_count(), nblocks));

  auto process_block = [&](std::size_t ib, std::array<std::vector<cplx>, kBathCount>& z,
                           std::vector<cplx>& xi, std::vector<cplx>& pi_i,
                           std::vector<cplx>& xs, std::vector<cplx>& ps,
                           std::vector<cplx>& t, std::vector<cplx>& u,
                           std::vector<cplx>& coef) {
    const std::size_t k0 = ib * kBlockBins;
    const std::size_t k1 = std::min(nb, k0 + kBlockBins);
    const std::size_t nk = k1 - k0;

    // Draws cover the whole block (DC/Nyquist included) so the stream layout
    // does not depend on which bins end up being used.
    for (std::size_t b = 0; b < kBathCount; ++b) {
      rng::GaussianStream gs(rng::derive_seed(cfg.seed, b, ib));
      z[b].resize(nk);
      for (std::size_t k = 0; k < nk; ++k) z[b][k] = gs.circular();
    }

    // Model bins: strictly positive frequency, Nyquist excluded.
    const std::size_t v0 = std::max<std::size_t>(k0, 1);
    const std::size_t v1 = std::min(k1, nb - 1);
    if (v0 >= v1) return;
    const std::size_t m = v1 - v0;
    const std::size_t off = v0 - k0;

    std::vector<double> omega(m);
    for (std::size_t k = 0; k < m; ++k)
      omega[k] = kTwoPi * static_cast<double>(v0 + k) * fs / static_cast<double>(n);
    const model::ModelEvaluator ev(cfg.spin, cfg.epr, cfg.det, FrequencyGrid(std::move(omega)));
    const auto& keff = ev.k_eff();
    const auto& gvr = ev.g_vr();
    const auto& kth = ev.k_th();
    const auto& kbb = ev.k_bb();

    using kernels::mix_accum;
    using kernels::scale_accum;

    // Squeezed-pair quadratures reaching the two detectors.
    zero_fill(xi, m);
    scale_accum(xi.data(), er * inv_sqrt2, z[kV1x].data() + off, m);
    scale_accum(xi.data(), -emr * inv_sqrt2, z[kV2x].data() + off, m);
    zero_fill(pi_i, m);
    scale_accum(pi_i.data(), emr * inv_sqrt2, z[kV1p].data() + off, m);
    scale_accum(pi_i.data(), -er * inv_sqrt2, z[kV2p].data() + off, m);
    zero_fill(xs, m);
    scale_accum(xs.data(), er * inv_sqrt2, z[kV1x].data() + off, m);
    scale_accum(xs.data(), emr * inv_sqrt2, z[kV2x].data() + off, m);
    zero_fill(ps, m);
    scale_accum(ps.data(), emr * inv_sqrt2, z[kV1p].data() + off, m);
    scale_accum(ps.data(), er * inv_sqrt2, z[kV2p].data() + off, m);

    // Idler: gain * (phase-quadrature mix + back-action * amplitude mix),
    // then the force baths and the output-port vacuum.
    zero_fill(t, m);
    scale_accum(t.data(), a_in, pi_i.data(), m);
    scale_accum(t.data(), b_in, z[kWpi2].data() + off, m);
    zero_fill(u, m);
    scale_accum(u.data(), a_in, xi.data(), m);
    scale_accum(u.data(), b_in, z[kW0].data() + off, m);
    mix_accum(t.data(), keff.data(), u.data(), m);

    cplx* idler_acc = acc[0].data() + v0;
    mix_accum(idler_acc, gvr.data(), t.data(), m);
    zero_fill(coef, m);
    scale_accum(coef.data(), c_th, kth.data(), m);
    mix_accum(idler_acc, coef.data(), z[kFth].data() + off, m);
    zero_fill(coef, m);
    scale_accum(coef.data(), c_bb, kbb.data(), m);
    mix_accum(idler_acc, coef.data(), z[kFbb].data() + off, m);
    scale_accum(idler_acc, c_out, z[kVout].data() + off, m);

    for (std::size_t j = 0; j < nt; ++j) {
      cplx* sig_acc = acc[1 + j].data() + v0;
      scale_accum(sig_acc, sin_c[j], xs.data(), m);
      scale_accum(sig_acc, cos_c[j], ps.data(), m);
      scale_accum(sig_acc, c_vs, z[kVs].data() + off, m);
    }
  };

  auto run_range = [&](std::size_t first, std::size_t stride) {
    std::array<std::vector<cplx>, kBathCount> z;
    std::vector<cplx> xi, pi_i, xs, ps, t, u, coef;
    for (std::size_t ib = first; ib < nblocks; ib += stride)
      process_block(ib, z, xi, pi_i, xs, ps, t, u, coef);
  };

  if (workers <= 1) {
    run_range(0, 1);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          run_range(w, workers);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  // Inverse transform with 1/sqrt(N) so a unit-variance bath maps to a
  // unit-variance sample stream (one-sided vacuum PSD 2/fs).
  SynthesisResult result;
  result.sample_rate_hz = fs;
  result.thetas = thetas;
  result.provenance = "synth-" + digest::hex(cfg.digest());
  result.signals.resize(nt);

  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  auto transform = [&](std::vector<cplx>& spec, std::vector<double>& out) {
    spec.front() = cplx(0.0, 0.0);
    spec.back() = cplx(0.0, 0.0);
    for (auto& v : spec) v *= scale;
    out.resize(n);
    fft::complex_to_real(spec.data(), out.data(), n);
    std::vector<cplx>().swap(spec);  // release before the next transform
  };

  transform(acc[0], result.idler);
  for (std::size_t j = 0; j < nt; ++j) transform(acc[1 + j], result.signals[j]);
  return result;
}

}  // namespace sqz::synth
