#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include "sqz/spectral_model.hpp"
#include "sqz/types.hpp"

using namespace sqz;
using cplx = std::complex<double>;

namespace {

// Reference lab configurations used throughout (positive-mass, negative-mass,
// and the high-frequency oscillator).
SpinParams spin_pos() { return SpinParams::from_hz(10.7e3, 9.3e3, 240.0, 140e3, 190e3, 3.5); }
SpinParams spin_neg() { return SpinParams::from_hz(-10.5e3, 9.5e3, 240.0, 130e3, 190e3, 3.4); }
SpinParams spin_hi() { return SpinParams::from_hz(54e3, 8.5e3, 200.0, 5e3, 190e3, 4.0); }
EprParams epr_lab() { return EprParams{1.42, 0.92, 0.89, 0.90}; }
EprParams epr_hi() { return EprParams{1.31, 0.92, 0.89, 0.90}; }

FrequencyGrid band_grid() { return FrequencyGrid::linspace_hz(3e3, 60e3, 241); }

FrequencyGrid single_bin(double omega) {
  return FrequencyGrid(std::vector<double>{std::abs(omega)});
}

void check_rel(double got, double want, double tol) {
  CHECK(std::abs(got - want) <= tol * std::abs(want));
}

}  // namespace

TEST_CASE("back-action response at resonance matches the reference evaluation") {
  const auto spin = spin_pos();
  const auto grid = single_bin(spin.larmor);
  const auto k = model::atomic_backaction(spin, grid);
  REQUIRE(k.size() == 1);
  check_rel(k.values[0].real(), 0.21728288742782123, 1e-12);
  check_rel(k.values[0].imag(), 38.74878159128545, 1e-12);

  // Far above resonance the response has decayed to almost nothing.
  const auto far = model::atomic_backaction(spin, single_bin(hz_to_rad(1e6)));
  CHECK(std::abs(far.values[0]) < 0.02);
}

TEST_CASE("thermal coupling shares the back-action denominator") {
  const auto spin = spin_pos();
  const auto grid = band_grid();
  const auto ka = model::atomic_backaction(spin, grid);
  const auto kth = model::thermal_coupling(spin, grid);

  // Same denominator means the ratio is the frequency-independent constant
  // sqrt(2*decay/readout).
  const double want = std::sqrt(2.0 * spin.decay / spin.readout);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const cplx ratio = kth.values[i] / ka.values[i];
    CHECK(std::abs(ratio.real() - want) < 1e-12 * want);
    CHECK(std::abs(ratio.imag()) < 1e-12 * want);
  }

  const auto at_res = model::thermal_coupling(spin, single_bin(spin.larmor));
  check_rel(std::norm(at_res.values[0]), 77.497563182570914, 1e-12);
}

TEST_CASE("broadband coupling is nearly flat across the measurement band") {
  const auto spin = spin_pos();
  // 1 kHz steps over the band; neighboring magnitudes differ by < 3%.
  const auto grid = FrequencyGrid::linspace_hz(3e3, 60e3, 58);
  const auto kbb = model::broadband_coupling(spin, grid);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double a = std::abs(kbb.values[i - 1]);
    const double b = std::abs(kbb.values[i]);
    CHECK(std::abs(b / a - 1.0) < 0.03);
  }
}

TEST_CASE("wave-plate offset renormalizes the oscillator parameters") {
  const auto spin = SpinParams::from_hz(10.5e3, 9.5e3, 240.0);

  SUBCASE("frozen values at 42 and 45 degrees") {
    const auto e42 = model::vr_effective_params(spin, DetectionConfig::from_deg(0.0, 42.0));
    check_rel(rad_to_hz(e42.larmor), 7787.6967370659322, 1e-12);
    check_rel(rad_to_hz(e42.readout), 7073.7676318696922, 1e-12);

    const auto e45 = model::vr_effective_params(spin, DetectionConfig::from_deg(0.0, 45.0));
    check_rel(rad_to_hz(e45.larmor), 7770.135133960026, 1e-12);
    check_rel(rad_to_hz(e45.readout), 6418.807284575676, 1e-12);
  }

  SUBCASE("zero offset is the identity, bit for bit") {
    const auto e0 = model::vr_effective_params(spin, DetectionConfig::from_deg(0.0, 0.0));
    CHECK(e0.larmor == spin.larmor);
    CHECK(e0.readout == spin.readout);
  }

  SUBCASE("negative-mass offset of the opposite sign softens the oscillator") {
    const auto neg = spin_neg();
    const auto e = model::vr_effective_params(neg, DetectionConfig::from_deg(0.0, -45.0));
    CHECK(std::abs(e.larmor) < std::abs(neg.larmor));
    CHECK(e.readout < neg.readout);
    CHECK(e.larmor < 0.0);  // sign is preserved
  }

  SUBCASE("rotation past the stability boundary is rejected") {
    const auto strong = SpinParams::from_hz(5e3, 30e3, 240.0);
    try {
      model::vr_effective_params(strong, DetectionConfig::from_deg(0.0, 45.0));
      FAIL("expected DomainError");
    } catch (const DomainError& e) {
      CHECK(e.radicand() == doctest::Approx(-2.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("rotation bandwidth of the high-frequency oscillator") {
  const auto spin = SpinParams::from_hz(54e3, 8.5e3, 200.0);
  const double bw = model::sql_bandwidth(spin, DetectionConfig{});
  check_rel(rad_to_hz(bw), 4094.7501931112538, 1e-12);

  // No readout: the angle never rotates.
  CHECK(model::sql_bandwidth(SpinParams::from_hz(54e3, 0.0, 200.0), DetectionConfig{}) == 0.0);

  // Readout without an oscillator frequency is outside the formula's domain.
  CHECK_THROWS_AS(model::sql_bandwidth(SpinParams::from_hz(0.0, 8.5e3, 200.0),
                                       DetectionConfig{}),
                  DomainError);
}

TEST_CASE("quantum cooperativity") {
  check_rel(model::cooperativity(spin_pos()), 4.84375, 1e-14);
  CHECK_THROWS_AS(model::cooperativity(SpinParams::from_hz(10e3, 9e3, 0.0)), DomainError);
}

TEST_CASE("conditional floor without an oscillator") {
  // No readout and no baths: only the squeezing and the losses remain.
  const auto spin = SpinParams::from_hz(1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0);
  const auto grid = single_bin(hz_to_rad(20e3));
  const auto det = DetectionConfig::from_deg(0.0, 0.0);

  const auto lossy = model::conditional_spectrum(spin, epr_lab(), det, grid);
  check_rel(lossy.values[0].real(), 0.40626246538098415, 1e-13);
  check_rel(10.0 * std::log10(lossy.values[0].real()), -3.9119330031923112, 1e-13);

  // With every efficiency at 1 the floor collapses to the pure-state value.
  const auto pure = model::conditional_spectrum(spin, EprParams{1.42, 1.0, 1.0, 1.0}, det, grid);
  check_rel(pure.values[0].real(), 0.11645381004246563, 1e-13);
  check_rel(pure.values[0].real(), 1.0 / std::cosh(2.0 * 1.42), 1e-13);
}

TEST_CASE("conditional spectrum at the resonant optimal angle") {
  const auto spin = spin_pos();
  const auto grid = single_bin(spin.larmor);
  const auto phi = model::squeezing_angle(spin, DetectionConfig{}, grid);
  DetectionConfig det;
  det.theta_s = phi.values[0].real();
  const auto s = model::conditional_spectrum(spin, epr_lab(), det, grid);
  check_rel(s.values[0].real(), 0.69120420343112787, 1e-12);
  CHECK(s.values[0].real() < 1.0);  // below vacuum at resonance
}

TEST_CASE("optimal angle is a quarter turn at resonance") {
  const auto spin = spin_hi();
  const auto phi = model::squeezing_angle(spin, DetectionConfig{}, single_bin(spin.larmor));
  check_rel(rad_to_deg(phi.values[0].real()), 90.001248965532071, 1e-12);
}

TEST_CASE("squeezing angle minimizes the conditional spectrum") {
  const auto spin = spin_pos();
  const auto epr = epr_lab();
  const auto det0 = DetectionConfig{};
  std::mt19937_64 rng(55);
  std::uniform_real_distribution<double> pick(3e3, 60e3);

  for (int trial = 0; trial < 8; ++trial) {
    const auto grid = single_bin(hz_to_rad(pick(rng)));
    const auto phi = model::squeezing_angle(spin, det0, grid).values[0].real();
    DetectionConfig at_phi;
    at_phi.theta_s = wrap_angle(phi);
    const double best = model::conditional_spectrum(spin, epr, at_phi, grid).values[0].real();

    // Dense scan in 0.1 degree steps: nothing beats the closed-form angle.
    double scan_min = 1e9;
    for (int k = 0; k < 1800; ++k) {
      DetectionConfig d;
      d.theta_s = wrap_angle(deg_to_rad(0.1 * k));
      scan_min = std::min(scan_min,
                          model::conditional_spectrum(spin, epr, d, grid).values[0].real());
    }
    CHECK(best <= scan_min * (1.0 + 1e-9));

    // The closed-form lower envelope agrees with evaluating at the angle.
    const double env =
        model::conditional_spectrum_optimal_angle(spin, epr, det0, grid).values[0].real();
    check_rel(env, best, 1e-12);
  }
}

TEST_CASE("conditional spectrum is bounded by the loss floor and the ceiling") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> uf(0.3, 1.0), ur(0.1, 1.6), uth(0.0, 8.0);
  std::uniform_real_distribution<double> uw(2e3, 80e3), ua(-1.5, 1.5);
  const auto grid = FrequencyGrid::linspace_hz(1e3, 90e3, 64);

  for (int trial = 0; trial < 20; ++trial) {
    const auto spin = SpinParams::from_hz(uw(rng), uw(rng) * 0.5, 300.0, uw(rng), 200e3,
                                          uth(rng));
    const EprParams epr{ur(rng), uf(rng), uf(rng), uf(rng)};
    DetectionConfig det;
    det.theta_s = ua(rng);
    det.delta_theta_i = 0.0;
    const auto s = model::conditional_spectrum(spin, epr, det, grid);
    const double floor = 1.0 - epr.eta_s;
    const double ceil = epr.eta_s * std::cosh(2.0 * epr.r) + (1.0 - epr.eta_s);
    for (const auto& v : s.values) {
      CHECK(v.real() >= floor - 1e-12);
      CHECK(v.real() <= ceil + 1e-12);
    }
  }
}

TEST_CASE("conditional equals the Wiener combination of the joint spectra") {
  const auto grid = band_grid();
  std::mt19937_64 rng(4242);
  std::uniform_real_distribution<double> ua(-1.5, 1.5);

  const struct {
    SpinParams spin;
    EprParams epr;
  } cases[] = {{spin_pos(), epr_lab()}, {spin_neg(), epr_lab()}, {spin_hi(), epr_hi()}};

  for (const auto& c : cases) {
    for (int k = 0; k < 3; ++k) {
      DetectionConfig det;
      det.theta_s = ua(rng);
      const auto cond = model::conditional_spectrum(c.spin, c.epr, det, grid);
      const auto idler = model::idler_spectrum(c.spin, c.epr, det, grid);
      const auto cross = model::cross_spectrum(c.spin, c.epr, det, grid);
      const auto signal = model::signal_spectrum(c.epr, grid);
      for (std::size_t i = 0; i < grid.size(); ++i) {
        const double resid = signal.values[i].real() -
                             std::norm(cross.values[i]) / idler.values[i].real();
        check_rel(cond.values[i].real(), resid / kShotNoiseUnit, 1e-12);
      }
    }
  }
}

TEST_CASE("analytical gain is the residual minimizer") {
  const auto spin = spin_neg();
  const auto epr = epr_lab();
  const auto det = DetectionConfig::from_deg(30.0, -20.0);
  const auto grid = FrequencyGrid::linspace_hz(4e3, 40e3, 50);

  const auto g = model::analytical_wiener_gain(spin, epr, det, grid);
  const auto idler = model::idler_spectrum(spin, epr, det, grid);
  const auto cross = model::cross_spectrum(spin, epr, det, grid);
  const auto signal = model::signal_spectrum(epr, grid);

  auto residual = [&](std::size_t i, cplx gain) {
    return signal.values[i].real() + std::norm(gain) * idler.values[i].real() +
           2.0 * (std::conj(gain) * cross.values[i]).real();
  };

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> eps(-0.3, 0.3);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double best = residual(i, g.values[i]);
    CHECK(best > 0.0);
    for (int k = 0; k < 5; ++k) {
      const cplx perturbed = g.values[i] + cplx(eps(rng), eps(rng)) * std::abs(g.values[i]);
      CHECK(residual(i, perturbed) >= best * (1.0 - 1e-12));
    }
  }
}

TEST_CASE("mass sign flips with mirrored angles leave the spectra unchanged") {
  auto neg = spin_neg();
  auto pos = neg;
  pos.larmor = -neg.larmor;
  const auto grid = band_grid();
  const auto epr = epr_lab();

  const auto det_f = DetectionConfig::from_deg(37.0, 13.0);
  const auto det_m = DetectionConfig::from_deg(-37.0, -13.0);

  const auto c_pos = model::conditional_spectrum(pos, epr, det_f, grid);
  const auto c_neg = model::conditional_spectrum(neg, epr, det_m, grid);
  const auto i_pos = model::idler_spectrum(pos, epr, det_f, grid);
  const auto i_neg = model::idler_spectrum(neg, epr, det_m, grid);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    check_rel(c_neg.values[i].real(), c_pos.values[i].real(), 1e-13);
    check_rel(i_neg.values[i].real(), i_pos.values[i].real(), 1e-13);
  }

  // The optimal angle mirrors to its supplement.
  const auto phi_pos = model::squeezing_angle(pos, DetectionConfig{}, grid);
  const auto phi_neg = model::squeezing_angle(neg, DetectionConfig{}, grid);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double mirrored = kPi - phi_pos.values[i].real();
    const double diff = std::abs(wrap_angle(phi_neg.values[i].real() - mirrored));
    CHECK(diff < 1e-10);
  }
}

TEST_CASE("noise contribution structure") {
  const auto spin = spin_pos();
  const auto epr = epr_lab();
  const auto det = DetectionConfig{};
  const auto grid = band_grid();
  const auto nc = model::noise_contributions(spin, epr, det, grid);

  SUBCASE("output loss term is flat and equals its closed form at zero offset") {
    const double want = (1.0 - epr.eta_i_out) / (2.0 * epr.eta_i_out);
    for (const auto& v : nc.lambda_out.values) CHECK(v.real() == doctest::Approx(want).epsilon(1e-14));
  }

  SUBCASE("input loss term follows the back-action magnitude") {
    const auto ka = model::atomic_backaction(spin, grid);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double want = (1.0 - epr.eta_i_in) * (1.0 + std::norm(ka.values[i])) / 2.0;
      check_rel(nc.lambda_in.values[i].real(), want, 1e-12);
    }
  }

  SUBCASE("narrowband thermal noise dominates the broadband term at resonance") {
    const auto res = single_bin(spin.larmor);
    const auto nres = model::noise_contributions(spin, epr, det, res);
    CHECK(nres.thermal.values[0].real() > 10.0 * nres.broadband.values[0].real());
  }
}

TEST_CASE("zero wave-plate offset collapses the effective path bit for bit") {
  const auto spin = spin_pos();
  const auto epr = epr_lab();
  const auto det0 = DetectionConfig::from_deg(25.0, 0.0);
  const auto grid = band_grid();

  // Idler gain is exactly unity...
  const auto g = model::vr_gain(spin, det0, grid);
  for (const auto& v : g.values) CHECK(v == cplx(1.0, 0.0));

  // ...and the thermal term equals the plain product with no rounding at all.
  const auto nc = model::noise_contributions(spin, epr, det0, grid);
  const auto kth = model::thermal_coupling(spin, grid);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double re = kth.values[i].real(), im = kth.values[i].imag();
    const double plain = (re * re + im * im) * (0.5 + spin.n_th);
    CHECK(nc.thermal.values[i].real() == plain);
  }
}

TEST_CASE("undamped resonance pole is reported with its bin") {
  auto spin = SpinParams::from_hz(10e3, 9e3, 0.0);
  const double w0 = std::abs(spin.larmor);
  const FrequencyGrid grid(std::vector<double>{0.5 * w0, w0, 2.0 * w0});
  try {
    model::atomic_backaction(spin, grid);
    FAIL("expected SingularEvaluationError");
  } catch (const SingularEvaluationError& e) {
    CHECK(e.bin() == 1);
    CHECK(e.omega() == w0);
  }

  // Off the pole the undamped response is finite.
  const auto ok = model::atomic_backaction(spin, single_bin(1.5 * w0));
  CHECK(std::isfinite(ok.values[0].real()));
  CHECK(ok.values[0].imag() == 0.0);
}

TEST_CASE("filter cavity phase and equivalent length") {
  CavityParams cav;
  cav.detuning = hz_to_rad(4.7e3);
  cav.bandwidth = hz_to_rad(11.5e3);
  cav.finesse = 6000.0;

  const auto grid = FrequencyGrid::linspace_hz(1e3, 100e3, 200);
  const auto phase = model::filter_cavity_phase(cav, grid);

  // Principal branch: low-frequency limit matches the direct arctangent and
  // the phase decays monotonically toward zero.
  const double low = std::atan(2.0 * cav.detuning * cav.bandwidth /
                               (cav.bandwidth * cav.bandwidth - cav.detuning * cav.detuning +
                                grid[0] * grid[0]));
  CHECK(phase.values[0].real() == doctest::Approx(low).epsilon(1e-14));
  for (std::size_t i = 1; i < grid.size(); ++i) {
    CHECK(phase.values[i].real() < phase.values[i - 1].real());
    CHECK(phase.values[i].real() > 0.0);
  }

  check_rel(model::equivalent_length(cav),
            kSpeedOfLight / (2.0 * cav.bandwidth * cav.finesse), 1e-15);
}

TEST_CASE("entanglement level of the detected pair") {
  check_rel(model::duan_simon_level(epr_lab()), 0.20734053850816725, 1e-13);
  CHECK(model::duan_simon_level(epr_lab()) < 1.0);

  // Vacuum sits exactly on the separability boundary.
  CHECK(model::duan_simon_level(EprParams{0.0, 0.92, 0.89, 0.90}) == doctest::Approx(1.0).epsilon(1e-15));

  // More squeezing can only help until loss dominates; r=0.2 must beat r=0.
  CHECK(model::duan_simon_level(EprParams{0.2, 0.92, 0.89, 0.90}) < 1.0);
}

TEST_CASE("container and parameter validation") {
  CHECK_THROWS_AS(FrequencyGrid(std::vector<double>{2.0, 1.0}), ValidationError);
  CHECK_THROWS_AS(FrequencyGrid(std::vector<double>{-1.0, 1.0}), ValidationError);
  CHECK_THROWS_AS(FrequencyGrid(std::vector<double>{}), ValidationError);

  auto bad_spin = spin_pos();
  bad_spin.readout = -1.0;
  CHECK_THROWS_AS(model::atomic_backaction(bad_spin, band_grid()), ValidationError);

  auto shallow = spin_pos();
  shallow.bb_decay = shallow.decay / 2.0;  // broadband mode may not decay slower
  CHECK_THROWS_AS(shallow.validate(), ValidationError);

  EprParams bad_epr{1.0, 0.0, 0.9, 0.9};  // eta_s = 0 is not a physical channel
  CHECK_THROWS_AS(bad_epr.validate(), ValidationError);

  CHECK_THROWS_AS(SpectrumSeries(band_grid(), std::vector<double>(3, 1.0),
                                 Normalization::kShotNoise, SeriesKind::kPsd),
                  ValidationError);
  CHECK_THROWS_AS(SpectrumSeries(single_bin(1.0), std::vector<double>{-0.5},
                                 Normalization::kShotNoise, SeriesKind::kPsd),
                  ValidationError);
}

TEST_CASE("batched evaluator agrees with the free functions") {
  const auto spin = spin_neg();
  const auto epr = epr_lab();
  const auto det = DetectionConfig::from_deg(60.0, -45.0);
  const auto grid = band_grid();

  const model::ModelEvaluator ev(spin, epr, det, grid);
  const auto idler = model::idler_spectrum(spin, epr, det, grid);
  const auto cross = model::cross_spectrum(spin, epr, det, grid);
  const auto cond = model::conditional_spectrum(spin, epr, det, grid);
  const auto signal = model::signal_spectrum(epr, grid);

  const auto ev_idler = ev.idler_psd();
  const auto ev_cross = ev.cross_csd(det.theta_s);
  const auto ev_cond = ev.conditional(det.theta_s);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CHECK(ev_idler[i] == idler.values[i].real());
    CHECK(ev_cross[i] == cross.values[i]);
    CHECK(ev_cond[i] == cond.values[i].real());
  }
  CHECK(ev.signal_psd() == signal.values[0].real());

  // A different homodyne angle reuses the precomputed tables.
  const auto det2 = DetectionConfig::from_deg(-10.0, -45.0);
  const auto cross2 = model::cross_spectrum(spin, epr, det2, grid);
  const auto ev_cross2 = ev.cross_csd(det2.theta_s);
  for (std::size_t i = 0; i < grid.size(); ++i) CHECK(ev_cross2[i] == cross2.values[i]);
}
