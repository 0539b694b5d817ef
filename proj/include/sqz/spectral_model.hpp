#pragma once

#include <memory>

#include "sqz/types.hpp"

// Closed-form response functions and noise spectra of the entangled-light /
// spin-oscillator network, evaluated on arbitrary frequency grids.
//
// Unit conventions:
//  - frequencies in rad/s throughout;
//  - "shot-noise units" spectra are ratios to the vacuum level (vacuum == 1);
//  - "absolute" spectra are symmetrized densities (vacuum == kShotNoiseUnit).
// All functions are pure; they share no mutable state.
namespace sqz::model {

// Effective oscillator parameters after the wave-plate quadrature rotation.
struct EffectiveParams {
  double readout = 0.0;  // rad/s, >= 0
  double larmor = 0.0;   // rad/s, signed
};

// Complex back-action response K_a(w) of the bare oscillator.
// Throws SingularEvaluationError if decay == 0 and a bin sits exactly on the
// resonance pole.
SpectrumSeries atomic_backaction(const SpinParams& spin, const FrequencyGrid& grid);

// Thermal-force coupling response K_th(w) (same denominator as K_a).
SpectrumSeries thermal_coupling(const SpinParams& spin, const FrequencyGrid& grid);

// Broadband-mode coupling response: K_th's shape with (bb_readout, bb_decay)
// substituted and the oscillator frequency unchanged.
SpectrumSeries broadband_coupling(const SpinParams& spin, const FrequencyGrid& grid);

// (Gamma_eff, Omega_eff) induced by the wave-plate offset. Throws DomainError
// (carrying the radicand) when the rotation leaves the valid regime.
EffectiveParams vr_effective_params(const SpinParams& spin, const DetectionConfig& det);

// Complex idler gain g(w) = 1 - K_a(w) * sin(2*delta_theta_i)/2.
SpectrumSeries vr_gain(const SpinParams& spin, const DetectionConfig& det,
                       const FrequencyGrid& grid);

// The four extra idler-noise terms of the lossy model, in absolute units:
// input-coupling loss, output loss, narrowband thermal, broadband thermal.
struct NoiseContributions {
  SpectrumSeries lambda_in;
  SpectrumSeries lambda_out;
  SpectrumSeries thermal;
  SpectrumSeries broadband;
};
NoiseContributions noise_contributions(const SpinParams& spin, const EprParams& epr,
                                       const DetectionConfig& det,
                                       const FrequencyGrid& grid);

// Conditional signal spectrum after optimal Wiener subtraction of the idler,
// in shot-noise units. Bounded below by 1-eta_s and above by
// eta_s*cosh(2r) + (1-eta_s).
SpectrumSeries conditional_spectrum(const SpinParams& spin, const EprParams& epr,
                                    const DetectionConfig& det,
                                    const FrequencyGrid& grid);

// Conditional spectrum evaluated at the per-bin optimal homodyne angle
// (det.theta_s is ignored; the wave-plate offset still applies).
SpectrumSeries conditional_spectrum_optimal_angle(const SpinParams& spin,
                                                  const EprParams& epr,
                                                  const DetectionConfig& det,
                                                  const FrequencyGrid& grid);

// Frequency-dependent optimal homodyne angle Phi(w) in [0, pi).
// Convention: bins where the effective back-action vanishes return 0.
SpectrumSeries squeezing_angle(const SpinParams& spin, const DetectionConfig& det,
                               const FrequencyGrid& grid);

// Bandwidth over which the optimal angle sweeps through the resonance region:
// |Omega_eff| * (sqrt(1 + Gamma_eff/|Omega_eff|) - 1). Returns 0 when the
// effective readout rate is 0; throws DomainError when only the effective
// oscillator frequency is 0.
double sql_bandwidth(const SpinParams& spin, const DetectionConfig& det);

// Detected idler power spectral density, absolute units.
SpectrumSeries idler_spectrum(const SpinParams& spin, const EprParams& epr,
                              const DetectionConfig& det, const FrequencyGrid& grid);

// Signal-idler cross spectral density <q_s * conj(Q_i)>, absolute units.
SpectrumSeries cross_spectrum(const SpinParams& spin, const EprParams& epr,
                              const DetectionConfig& det, const FrequencyGrid& grid);

// Detected signal power spectral density (flat), absolute units.
SpectrumSeries signal_spectrum(const EprParams& epr, const FrequencyGrid& grid);

// Optimal conditioning gain g(w) = -cross/idler. Throws
// SingularEvaluationError naming the bin if the idler spectrum vanishes.
SpectrumSeries analytical_wiener_gain(const SpinParams& spin, const EprParams& epr,
                                      const DetectionConfig& det,
                                      const FrequencyGrid& grid);

// Quantum cooperativity readout/(decay*(1+2*n_th)); requires decay > 0.
double cooperativity(const SpinParams& spin);

// Quadrature rotation angle of a detuned filter cavity (principal branch).
SpectrumSeries filter_cavity_phase(const CavityParams& cav, const FrequencyGrid& grid);

// Equivalent cavity length c/(2*bandwidth*finesse) in meters.
double equivalent_length(const CavityParams& cav);

// Joint-quadrature variance sum of the entangled pair, normalized to the
// separability bound: < 1 certifies entanglement. Idler efficiency is the
// product eta_i_in * eta_i_out.
double duan_simon_level(const EprParams& epr);

// Precomputes the frequency-dependent factors of one parameter point so that
// several homodyne-angle-dependent spectra can be evaluated without redoing
// the response functions. Used by the fitter (many angles per parameter
// point) and by the record synthesizer (per-block coefficient tables).
// Cheap to copy; the precomputed tables are shared.
class ModelEvaluator {
 public:
  ModelEvaluator(const SpinParams& spin, const EprParams& epr,
                 const DetectionConfig& det, const FrequencyGrid& grid);

  // Spectra in the same conventions as the free functions above. theta_s
  // overrides the angle given at construction; the wave-plate offset does not
  // change.
  std::vector<double> idler_psd() const;                              // absolute
  std::vector<std::complex<double>> cross_csd(double theta_s) const;  // absolute
  double signal_psd() const;  // absolute, flat in frequency
  std::vector<double> conditional(double theta_s) const;  // shot-noise units

  // Raw per-bin response tables (aligned with the construction grid).
  const std::vector<std::complex<double>>& k_eff() const;
  const std::vector<std::complex<double>>& g_vr() const;
  const std::vector<std::complex<double>>& k_th() const;
  const std::vector<std::complex<double>>& k_bb() const;

 private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
};

}  // namespace sqz::model
