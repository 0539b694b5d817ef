#include "sqz/spectral_model.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "sqz/kernels.hpp"

namespace sqz::model {

namespace {

// K(w) = num / ((d0 - w^2) - i*gamma*w), with the zero-damping pole check.
// `what` names the response in error messages.
std::vector<std::complex<double>> lorentzian(const FrequencyGrid& grid, double num,
                                             double d0, double gamma,
                                             const char* what) {
  const std::size_t n = grid.size();
  std::vector<std::complex<double>> out(n);
  if (num == 0.0) return out;  // zero coupling: identically zero, poles moot
  if (gamma == 0.0) {
    for (std::size_t i = 0; i < n; ++i) {
      const double w = grid[i];
      if (d0 - w * w == 0.0)
        throw SingularEvaluationError(
            std::string(what) + ": undamped resonance pole at bin " + std::to_string(i) +
                " (omega = " + std::to_string(w) + " rad/s)",
            i, w);
    }
  }
  kernels::response(out.data(), grid.values().data(), n, num, d0, gamma);
  return out;
}

double radicand_of(const SpinParams& spin, const DetectionConfig& det) {
  const double s2 = std::sin(2.0 * det.delta_theta_i);
  // Skip the term entirely when it is exactly zero so that delta_theta_i = 0
  // collapses to the bare parameters bit-for-bit.
  if (s2 == 0.0 || spin.readout == 0.0) return 1.0;
  return 1.0 - (spin.readout / (2.0 * spin.larmor)) * s2;
}

// Everything the lossy-model spectra share for one parameter point.
struct Pieces {
  EffectiveParams eff;
  std::vector<std::complex<double>> k_eff;  // back-action with effective params
  std::vector<std::complex<double>> g_vr;   // idler gain
  std::vector<std::complex<double>> k_th;   // narrowband thermal coupling
  std::vector<std::complex<double>> k_bb;   // broadband coupling
  std::vector<double> abs2_keff;
  std::vector<double> lambda_in;   // absolute units
  std::vector<double> lambda_out;  // absolute units
  std::vector<double> s_th;        // absolute units
  std::vector<double> s_bb;        // absolute units
  double ch = 1.0;  // cosh(2r)
  double sh = 0.0;  // sinh(2r)
  double eta_s = 1.0, eta_i_in = 1.0, eta_i_out = 1.0;
  double cos_dt = 1.0;
};

Pieces compute_pieces(const SpinParams& spin, const EprParams& epr,
                      const DetectionConfig& det, const FrequencyGrid& grid) {
  spin.validate();
  epr.validate();
  det.validate();

  Pieces p;
  p.eff = vr_effective_params(spin, det);
  p.ch = std::cosh(2.0 * epr.r);
  p.sh = std::sinh(2.0 * epr.r);
  p.eta_s = epr.eta_s;
  p.eta_i_in = epr.eta_i_in;
  p.eta_i_out = epr.eta_i_out;
  p.cos_dt = std::cos(det.delta_theta_i);

  const std::size_t n = grid.size();

  p.k_eff = lorentzian(grid, p.eff.readout * p.eff.larmor,
                       p.eff.larmor * p.eff.larmor + 0.25 * (spin.decay * spin.decay),
                       spin.decay, "back-action response (effective)");

  // Idler gain from the bare back-action response.
  const double s2 = std::sin(2.0 * det.delta_theta_i);
  p.g_vr.assign(n, {1.0, 0.0});
  if (s2 != 0.0) {
    const auto k_bare = lorentzian(
        grid, spin.readout * spin.larmor,
        spin.larmor * spin.larmor + 0.25 * (spin.decay * spin.decay), spin.decay,
        "back-action response");
    const double half_s2 = s2 / 2.0;
    for (std::size_t i = 0; i < n; ++i)
      p.g_vr[i] = std::complex<double>(1.0, 0.0) - k_bare[i] * half_s2;
  }

  p.k_th = lorentzian(grid, std::sqrt(2.0 * spin.decay * spin.readout) * spin.larmor,
                      spin.larmor * spin.larmor + 0.25 * (spin.decay * spin.decay),
                      spin.decay, "thermal coupling response");
  p.k_bb = lorentzian(grid, std::sqrt(2.0 * spin.bb_decay * spin.bb_readout) * spin.larmor,
                      spin.larmor * spin.larmor + 0.25 * (spin.bb_decay * spin.bb_decay),
                      spin.bb_decay, "broadband coupling response");

  p.abs2_keff.resize(n);
  kernels::abs2(p.abs2_keff.data(), p.k_eff.data(), n);
  std::vector<double> abs2_g(n), abs2_th(n), abs2_bb(n);
  kernels::abs2(abs2_g.data(), p.g_vr.data(), n);
  kernels::abs2(abs2_th.data(), p.k_th.data(), n);
  kernels::abs2(abs2_bb.data(), p.k_bb.data(), n);

  p.lambda_in.resize(n);
  p.lambda_out.resize(n);
  p.s_th.resize(n);
  p.s_bb.resize(n);
  const double li = (1.0 - epr.eta_i_in) / 2.0;
  const double lo = (1.0 - epr.eta_i_out) / (2.0 * epr.eta_i_out);
  const double cdt2 = p.cos_dt * p.cos_dt;
  const double th_occ = 0.5 + spin.n_th;
  const double bb_occ = 0.5 + spin.n_bb;
  for (std::size_t i = 0; i < n; ++i) {
    p.lambda_in[i] = li * (1.0 + p.abs2_keff[i]);
    p.lambda_out[i] = lo / abs2_g[i];
    p.s_th[i] = abs2_th[i] * cdt2 / abs2_g[i] * th_occ;
    p.s_bb[i] = abs2_bb[i] * cdt2 / abs2_g[i] * bb_occ;
  }
  return p;
}

std::vector<double> conditional_values(const Pieces& p, double theta_s,
                                       const FrequencyGrid& grid) {
  const std::size_t n = grid.size();
  const double ct = std::cos(theta_s);
  const double st = std::sin(theta_s);
  std::vector<double> out(n);
  const double base = 1.0 - p.eta_s;
  const double scale = p.eta_s / p.ch;
  const double ch2 = p.ch * p.ch;
  const double sh2 = p.sh * p.sh;
  for (std::size_t i = 0; i < n; ++i) {
    const std::complex<double> diff(ct - st * p.k_eff[i].real(), -st * p.k_eff[i].imag());
    const double num = diff.real() * diff.real() + diff.imag() * diff.imag();
    const double den = 1.0 + p.abs2_keff[i] +
                       2.0 * (p.lambda_in[i] + p.lambda_out[i] + p.s_th[i] + p.s_bb[i]) /
                           (p.eta_i_in * p.ch);
    out[i] = base + scale * (ch2 - sh2 * num / den);
  }
  return out;
}

std::vector<double> idler_values(const Pieces& p, const FrequencyGrid& grid) {
  const std::size_t n = grid.size();
  std::vector<double> out(n);
  std::vector<double> abs2_g(n);
  kernels::abs2(abs2_g.data(), p.g_vr.data(), n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = p.eta_i_out * abs2_g[i] *
             (p.ch * p.eta_i_in * (1.0 + p.abs2_keff[i]) / 2.0 + p.lambda_in[i] +
              p.s_th[i] + p.s_bb[i] + p.lambda_out[i]);
  }
  return out;
}

std::vector<std::complex<double>> cross_values(const Pieces& p, double theta_s,
                                               const FrequencyGrid& grid) {
  const std::size_t n = grid.size();
  const double ct = std::cos(theta_s);
  const double st = std::sin(theta_s);
  const double pref = -std::sqrt(p.eta_s * p.eta_i_out * p.eta_i_in) * p.sh / 2.0;
  std::vector<std::complex<double>> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::complex<double> corr(ct - st * p.k_eff[i].real(), st * p.k_eff[i].imag());
    out[i] = pref * std::conj(p.g_vr[i]) * corr;
  }
  return out;
}

}  // namespace

SpectrumSeries atomic_backaction(const SpinParams& spin, const FrequencyGrid& grid) {
  spin.validate();
  auto v = lorentzian(grid, spin.readout * spin.larmor,
                      spin.larmor * spin.larmor + 0.25 * (spin.decay * spin.decay),
                      spin.decay, "back-action response");
  return SpectrumSeries(grid, std::move(v), Normalization::kAbsolute, SeriesKind::kGain);
}

SpectrumSeries thermal_coupling(const SpinParams& spin, const FrequencyGrid& grid) {
  spin.validate();
  auto v = lorentzian(grid, std::sqrt(2.0 * spin.decay * spin.readout) * spin.larmor,
                      spin.larmor * spin.larmor + 0.25 * (spin.decay * spin.decay),
                      spin.decay, "thermal coupling response");
  return SpectrumSeries(grid, std::move(v), Normalization::kAbsolute, SeriesKind::kGain);
}

SpectrumSeries broadband_coupling(const SpinParams& spin, const FrequencyGrid& grid) {
  spin.validate();
  auto v = lorentzian(grid, std::sqrt(2.0 * spin.bb_decay * spin.bb_readout) * spin.larmor,
                      spin.larmor * spin.larmor + 0.25 * (spin.bb_decay * spin.bb_decay),
                      spin.bb_decay, "broadband coupling response");
  return SpectrumSeries(grid, std::move(v), Normalization::kAbsolute, SeriesKind::kGain);
}

EffectiveParams vr_effective_params(const SpinParams& spin, const DetectionConfig& det) {
  spin.validate();
  det.validate();
  const double rad = radicand_of(spin, det);
  if (!(rad > 0.0))
    throw DomainError("wave-plate rotation outside its valid regime (radicand = " +
                          std::to_string(rad) + " <= 0)",
                      rad);
  const double sq = std::sqrt(rad);
  const double c = std::cos(det.delta_theta_i);
  EffectiveParams eff;
  eff.readout = spin.readout * (c * c) / sq;
  eff.larmor = spin.larmor * sq;
  return eff;
}

SpectrumSeries vr_gain(const SpinParams& spin, const DetectionConfig& det,
                       const FrequencyGrid& grid) {
  spin.validate();
  det.validate();
  const std::size_t n = grid.size();
  std::vector<std::complex<double>> v(n, {1.0, 0.0});
  const double s2 = std::sin(2.0 * det.delta_theta_i);
  if (s2 != 0.0) {
    auto k = lorentzian(grid, spin.readout * spin.larmor,
                        spin.larmor * spin.larmor + 0.25 * (spin.decay * spin.decay),
                        spin.decay, "back-action response");
    const double half_s2 = s2 / 2.0;
    for (std::size_t i = 0; i < n; ++i)
      v[i] = std::complex<double>(1.0, 0.0) - k[i] * half_s2;
  }
  return SpectrumSeries(grid, std::move(v), Normalization::kAbsolute, SeriesKind::kGain);
}

NoiseContributions noise_contributions(const SpinParams& spin, const EprParams& epr,
                                       const DetectionConfig& det,
                                       const FrequencyGrid& grid) {
  const Pieces p = compute_pieces(spin, epr, det, grid);
  NoiseContributions out;
  out.lambda_in =
      SpectrumSeries(grid, p.lambda_in, Normalization::kAbsolute, SeriesKind::kPsd);
  out.lambda_out =
      SpectrumSeries(grid, p.lambda_out, Normalization::kAbsolute, SeriesKind::kPsd);
  out.thermal = SpectrumSeries(grid, p.s_th, Normalization::kAbsolute, SeriesKind::kPsd);
  out.broadband =
      SpectrumSeries(grid, p.s_bb, Normalization::kAbsolute, SeriesKind::kPsd);
  return out;
}

SpectrumSeries conditional_spectrum(const SpinParams& spin, const EprParams& epr,
                                    const DetectionConfig& det,
                                    const FrequencyGrid& grid) {
  const Pieces p = compute_pieces(spin, epr, det, grid);
  return SpectrumSeries(grid, conditional_values(p, det.theta_s, grid),
                        Normalization::kShotNoise, SeriesKind::kPsd);
}

SpectrumSeries conditional_spectrum_optimal_angle(const SpinParams& spin,
                                                  const EprParams& epr,
                                                  const DetectionConfig& det,
                                                  const FrequencyGrid& grid) {
  const Pieces p = compute_pieces(spin, epr, det, grid);
  const std::size_t n = grid.size();
  std::vector<double> out(n);
  const double base = 1.0 - p.eta_s;
  const double scale = p.eta_s / p.ch;
  const double ch2 = p.ch * p.ch;
  const double sh2 = p.sh * p.sh;
  for (std::size_t i = 0; i < n; ++i) {
    // max over theta of |cos(theta) - sin(theta)*K|^2, in closed form
    const double half_diff = (1.0 - p.abs2_keff[i]) / 2.0;
    const double re_k = p.k_eff[i].real();
    const double num = (1.0 + p.abs2_keff[i]) / 2.0 +
                       std::sqrt(half_diff * half_diff + re_k * re_k);
    const double den = 1.0 + p.abs2_keff[i] +
                       2.0 * (p.lambda_in[i] + p.lambda_out[i] + p.s_th[i] + p.s_bb[i]) /
                           (p.eta_i_in * p.ch);
    out[i] = base + scale * (ch2 - sh2 * num / den);
  }
  return SpectrumSeries(grid, out, Normalization::kShotNoise, SeriesKind::kPsd);
}

SpectrumSeries squeezing_angle(const SpinParams& spin, const DetectionConfig& det,
                               const FrequencyGrid& grid) {
  spin.validate();
  det.validate();
  const EffectiveParams eff = vr_effective_params(spin, det);
  auto k = lorentzian(grid, eff.readout * eff.larmor,
                      eff.larmor * eff.larmor + 0.25 * (spin.decay * spin.decay),
                      spin.decay, "back-action response (effective)");
  const std::size_t n = grid.size();
  std::vector<double> phi(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (k[i] == std::complex<double>(0.0, 0.0)) {
      phi[i] = 0.0;  // no back-action: angle defined as 0 by convention
      continue;
    }
    const std::complex<double> kinv = 1.0 / k[i];
    const double two_phi =
        std::atan2(-2.0 * kinv.real(), kinv.real() * kinv.real() +
                                           kinv.imag() * kinv.imag() - 1.0);
    double v = two_phi / 2.0;
    if (v < 0.0) v += kPi;
    phi[i] = v;
  }
  return SpectrumSeries(grid, phi, Normalization::kAbsolute, SeriesKind::kAngle);
}

double sql_bandwidth(const SpinParams& spin, const DetectionConfig& det) {
  const EffectiveParams eff = vr_effective_params(spin, det);
  if (eff.readout == 0.0) return 0.0;
  const double w = std::abs(eff.larmor);
  if (w == 0.0)
    throw DomainError("rotation bandwidth undefined: zero effective oscillator frequency",
                      0.0);
  return w * (std::sqrt(1.0 + eff.readout / w) - 1.0);
}

SpectrumSeries idler_spectrum(const SpinParams& spin, const EprParams& epr,
                              const DetectionConfig& det, const FrequencyGrid& grid) {
  const Pieces p = compute_pieces(spin, epr, det, grid);
  return SpectrumSeries(grid, idler_values(p, grid), Normalization::kAbsolute,
                        SeriesKind::kPsd);
}

SpectrumSeries cross_spectrum(const SpinParams& spin, const EprParams& epr,
                              const DetectionConfig& det, const FrequencyGrid& grid) {
  const Pieces p = compute_pieces(spin, epr, det, grid);
  return SpectrumSeries(grid, cross_values(p, det.theta_s, grid),
                        Normalization::kAbsolute, SeriesKind::kCsd);
}

SpectrumSeries signal_spectrum(const EprParams& epr, const FrequencyGrid& grid) {
  epr.validate();
  const double v = (epr.eta_s * std::cosh(2.0 * epr.r) + (1.0 - epr.eta_s)) *
                   kShotNoiseUnit;
  return SpectrumSeries(grid, std::vector<double>(grid.size(), v),
                        Normalization::kAbsolute, SeriesKind::kPsd);
}

SpectrumSeries analytical_wiener_gain(const SpinParams& spin, const EprParams& epr,
                                      const DetectionConfig& det,
                                      const FrequencyGrid& grid) {
  const Pieces p = compute_pieces(spin, epr, det, grid);
  const auto idler = idler_values(p, grid);
  const auto cross = cross_values(p, det.theta_s, grid);
  const std::size_t n = grid.size();
  std::vector<std::complex<double>> g(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (idler[i] == 0.0)
      throw SingularEvaluationError(
          "optimal gain undefined: idler spectrum vanishes at bin " + std::to_string(i),
          i, grid[i]);
    g[i] = -cross[i] / idler[i];
  }
  return SpectrumSeries(grid, std::move(g), Normalization::kAbsolute, SeriesKind::kGain);
}

double cooperativity(const SpinParams& spin) {
  spin.validate();
  if (spin.decay <= 0.0)
    throw DomainError("cooperativity undefined for zero decay rate", spin.decay);
  return spin.readout / (spin.decay * (1.0 + 2.0 * spin.n_th));
}

SpectrumSeries filter_cavity_phase(const CavityParams& cav, const FrequencyGrid& grid) {
  cav.validate();
  const std::size_t n = grid.size();
  std::vector<double> phi(n);
  const double num = 2.0 * cav.detuning * cav.bandwidth;
  const double d2 = cav.bandwidth * cav.bandwidth - cav.detuning * cav.detuning;
  for (std::size_t i = 0; i < n; ++i)
    phi[i] = std::atan(num / (d2 + grid[i] * grid[i]));
  return SpectrumSeries(grid, phi, Normalization::kAbsolute, SeriesKind::kAngle);
}

double equivalent_length(const CavityParams& cav) {
  cav.validate();
  return kSpeedOfLight / (2.0 * cav.bandwidth * cav.finesse);
}

double duan_simon_level(const EprParams& epr) {
  epr.validate();
  const double ch = std::cosh(2.0 * epr.r);
  const double sh = std::sinh(2.0 * epr.r);
  const double eta_i = epr.eta_i_in * epr.eta_i_out;
  return ((epr.eta_s + eta_i) * ch - 2.0 * std::sqrt(epr.eta_s * eta_i) * sh +
          (2.0 - epr.eta_s - eta_i)) /
         2.0;
}

// ---------------------------------------------------------------------------
// Batched evaluator
// ---------------------------------------------------------------------------

struct ModelEvaluator::Impl {
  FrequencyGrid grid;
  Pieces pieces;
};

ModelEvaluator::ModelEvaluator(const SpinParams& spin, const EprParams& epr,
                               const DetectionConfig& det, const FrequencyGrid& grid)
    : impl_(std::make_shared<Impl>(Impl{grid, compute_pieces(spin, epr, det, grid)})) {}

std::vector<double> ModelEvaluator::idler_psd() const {
  return idler_values(impl_->pieces, impl_->grid);
}

std::vector<std::complex<double>> ModelEvaluator::cross_csd(double theta_s) const {
  return cross_values(impl_->pieces, theta_s, impl_->grid);
}

double ModelEvaluator::signal_psd() const {
  const Pieces& p = impl_->pieces;
  return (p.eta_s * p.ch + (1.0 - p.eta_s)) * kShotNoiseUnit;
}

std::vector<double> ModelEvaluator::conditional(double theta_s) const {
  return conditional_values(impl_->pieces, theta_s, impl_->grid);
}

const std::vector<std::complex<double>>& ModelEvaluator::k_eff() const {
  return impl_->pieces.k_eff;
}
const std::vector<std::complex<double>>& ModelEvaluator::g_vr() const {
  return impl_->pieces.g_vr;
}
const std::vector<std::complex<double>>& ModelEvaluator::k_th() const {
  return impl_->pieces.k_th;
}
const std::vector<std::complex<double>>& ModelEvaluator::k_bb() const {
  return impl_->pieces.k_bb;
}

}  // namespace sqz::model
