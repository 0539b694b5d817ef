#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <complex>
#include <cstring>
#include <numeric>
#include <vector>

#include "sqz/estimator.hpp"
#include "sqz/spectral_model.hpp"
#include "sqz/synthesizer.hpp"
#include "sqz/types.hpp"

using namespace sqz;

namespace {

synth::SynthesisConfig table_config(double fs, double duration, std::uint64_t seed,
                                    double theta_deg) {
  synth::SynthesisConfig cfg;
  cfg.sample_rate_hz = fs;
  cfg.duration_s = duration;
  cfg.seed = seed;
  cfg.spin = SpinParams::from_hz(10.7e3, 9.3e3, 240.0, 140e3, 190e3, 3.5);
  cfg.epr = EprParams{1.42, 0.92, 0.89, 0.90};
  cfg.det = DetectionConfig::from_deg(theta_deg, 0.0);
  return cfg;
}

synth::SynthesisConfig vacuum_config(double fs, double duration, std::uint64_t seed) {
  synth::SynthesisConfig cfg;
  cfg.sample_rate_hz = fs;
  cfg.duration_s = duration;
  cfg.seed = seed;
  cfg.spin = SpinParams::from_hz(1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0);
  cfg.epr = EprParams{0.0, 1.0, 1.0, 1.0};
  cfg.det = DetectionConfig::from_deg(0.0, 0.0);
  return cfg;
}

double variance(const std::vector<double>& x) {
  double sum = 0.0, sum2 = 0.0;
  for (double v : x) {
    sum += v;
    sum2 += v * v;
  }
  const double n = static_cast<double>(x.size());
  const double mean = sum / n;
  return sum2 / n - mean * mean;
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("vacuum channels are white at the shot level") {
  const auto cfg = vacuum_config(65536.0, 8.0, 1234);
  const auto res = synth::synthesize(cfg);
  REQUIRE(res.idler.size() == cfg.sample_count());

  // Unit sample variance and flat one-sided PSD 2/fs.
  CHECK(std::abs(variance(res.idler) - 1.0) < 0.01);
  CHECK(std::abs(variance(res.signals[0]) - 1.0) < 0.01);

  est::WelchConfig wcfg;
  wcfg.segment_length = 1024;
  const auto psd = est::welch_psd(res.idler, cfg.sample_rate_hz, wcfg);
  const double shot = 2.0 / cfg.sample_rate_hz;
  const auto stats = est::band_stats(psd, 0.0, 1e9);
  CHECK(std::abs(stats.mean / shot - 1.0) < 0.01);

  // The record mean is exactly zero: the DC bin never receives power.
  const double mean = std::accumulate(res.idler.begin(), res.idler.end(), 0.0);
  CHECK(std::abs(mean) < 1e-9);
}

TEST_CASE("identical configs give bit-identical records") {
  auto cfg = table_config(32768.0, 1.0, 777, 30.0);
  cfg.theta_s_list = {deg_to_rad(30.0), deg_to_rad(120.0)};
  const auto a = synth::synthesize(cfg);
  const auto b = synth::synthesize(cfg);
  CHECK(same_bits(a.idler, b.idler));
  CHECK(same_bits(a.signals[0], b.signals[0]));
  CHECK(same_bits(a.signals[1], b.signals[1]));
  CHECK(a.provenance == b.provenance);

  auto cfg2 = cfg;
  cfg2.seed = 778;
  const auto c = synth::synthesize(cfg2);
  CHECK_FALSE(same_bits(a.idler, c.idler));
  CHECK(a.provenance != c.provenance);
}

TEST_CASE("idler does not depend on the requested homodyne angles") {
  auto one = table_config(32768.0, 1.0, 99, 0.0);
  one.theta_s_list = {0.3};
  auto many = one;
  many.theta_s_list = {0.3, 1.2, 2.1};
  const auto ra = synth::synthesize(one);
  const auto rb = synth::synthesize(many);
  CHECK(same_bits(ra.idler, rb.idler));
  CHECK(same_bits(ra.signals[0], rb.signals[0]));
}

TEST_CASE("time-domain variance equals the integrated spectrum") {
  // Rectangular window, no overlap: Welch integrates to the mean square
  // exactly, segment by segment.
  const auto cfg = table_config(65536.0, 8.0, 4321, 45.0);
  const auto res = synth::synthesize(cfg);
  REQUIRE(res.idler.size() >= (1u << 18));

  est::WelchConfig wcfg;
  wcfg.segment_length = 2048;
  wcfg.overlap = 0.0;
  wcfg.window = est::Window::kRect;
  const auto psd = est::welch_psd(res.idler, cfg.sample_rate_hz, wcfg);
  const double df = cfg.sample_rate_hz / static_cast<double>(wcfg.segment_length);
  double integral = 0.0;
  for (const auto& v : psd.values) integral += v.real() * df;
  CHECK(std::abs(integral / variance(res.idler) - 1.0) < 0.01);
}

TEST_CASE("Welch spectra converge to the model predictions") {
  const double fs = 131072.0;
  const auto cfg = table_config(fs, 8.0, 20250, 0.0);
  const auto res = synth::synthesize(cfg);

  est::WelchConfig wcfg;
  wcfg.segment_length = 2048;
  const auto grid = wcfg.grid(fs);
  const model::ModelEvaluator ev(cfg.spin, cfg.epr, cfg.det, grid);
  const double to_welch = 4.0 / fs;  // absolute units -> one-sided density

  SUBCASE("idler PSD") {
    const auto psd = est::welch_psd(res.idler, fs, wcfg);
    const auto want = ev.idler_psd();
    // Per-bin relative errors (equal weight per bin, so the resonance spike
    // does not dominate): the mean converges much faster than the per-bin
    // scatter, which only has to stay inside the Welch variance envelope for
    // ~1000 segments.
    double bias = 0.0, l1 = 0.0;
    std::size_t bins = 0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const double f = grid.value_hz(k);
      if (f < 3e3 || f > 60e3) continue;
      const double rel = psd.values[k].real() / (want[k] * to_welch) - 1.0;
      bias += rel;
      l1 += std::abs(rel);
      ++bins;
    }
    CHECK(std::abs(bias) / static_cast<double>(bins) < 0.01);
    CHECK(l1 / static_cast<double>(bins) < 0.06);
  }

  SUBCASE("signal PSD is flat at the thermal-squeezed level") {
    const auto psd = est::welch_psd(res.signals[0], fs, wcfg);
    const double want = ev.signal_psd() * to_welch;
    const auto stats = est::band_stats(psd, 3e3, 60e3);
    CHECK(std::abs(stats.mean / want - 1.0) < 0.02);
  }

  SUBCASE("signal-idler CSD") {
    const auto csd = est::welch_csd(res.signals[0], res.idler, fs, wcfg);
    const auto want = ev.cross_csd(cfg.det.theta_s);
    std::complex<double> bias(0.0, 0.0);
    double l1 = 0.0;
    std::size_t bins = 0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const double f = grid.value_hz(k);
      if (f < 3e3 || f > 60e3) continue;
      const std::complex<double> w = want[k] * to_welch;
      bias += (csd.values[k] - w) / std::abs(w);
      l1 += std::abs(csd.values[k] - w) / std::abs(w);
      ++bins;
    }
    CHECK(std::abs(bias) / static_cast<double>(bins) < 0.015);
    CHECK(l1 / static_cast<double>(bins) < 0.10);
  }
}

TEST_CASE("synthesis rejects invalid configurations") {
  auto cfg = table_config(1000.0, 1.0, 1, 0.0);

  SUBCASE("non-integer sample count") {
    cfg.duration_s = 1.0001;
    CHECK_THROWS_AS(synth::synthesize(cfg), ValidationError);
  }
  SUBCASE("odd sample count") {
    cfg.duration_s = 0.123;  // 123 samples
    CHECK_THROWS_AS(synth::synthesize(cfg), ValidationError);
  }
  SUBCASE("bad sample rate") {
    cfg.sample_rate_hz = -5.0;
    CHECK_THROWS_AS(synth::synthesize(cfg), ValidationError);
  }
  SUBCASE("non-finite angle") {
    cfg.theta_s_list = {std::nan("")};
    CHECK_THROWS_AS(synth::synthesize(cfg), ValidationError);
  }
  SUBCASE("unphysical efficiency") {
    cfg.epr.eta_s = 1.5;
    CHECK_THROWS_AS(synth::synthesize(cfg), ValidationError);
  }
}

TEST_CASE("pair extraction copies the shared idler") {
  auto cfg = table_config(16384.0, 1.0, 5, 10.0);
  cfg.theta_s_list = {0.1, 0.9};
  const auto res = synth::synthesize(cfg);
  const auto p1 = res.pair(1);
  CHECK(same_bits(p1.idler, res.idler));
  CHECK(same_bits(p1.signal, res.signals[1]));
  CHECK(p1.sample_rate_hz == cfg.sample_rate_hz);
  CHECK(p1.provenance == res.provenance);
  CHECK_NOTHROW(p1.validate());
  CHECK_THROWS_AS(res.pair(2), ValidationError);
}
