#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "sqz/synthesizer.hpp"
#include "sqz/types.hpp"

// Welch spectral estimation, data-driven Wiener gain construction, noncausal
// conditioning, and homodyne-angle-sweep spectrogram assembly.
//
// Unit note: Welch estimates are one-sided physical densities (per Hz); a
// shot-noise-normalized record has vacuum PSD 2/fs. Series produced here are
// tagged kAbsolute, meaning plain physical units rather than ratios to shot.
namespace sqz::est {

enum class Window { kHann, kRect };

// Defaults favor the operating regime here: Hann, 50% overlap, and a segment
// length giving ~100 Hz resolution at typical sample rates resolves the
// few-hundred-Hz oscillator linewidth.
struct WelchConfig {
  std::size_t segment_length = 8192;  // power of two, >= 64
  double overlap = 0.5;               // fraction in [0, 1)
  Window window = Window::kHann;
  bool detrend = false;  // subtract the per-segment mean

  void validate() const;
  std::size_t step() const;  // hop between segments, >= 1
  // Output bins: k = 1 .. segment_length/2 (DC dropped, Nyquist kept).
  FrequencyGrid grid(double sample_rate_hz) const;
};

struct WienerFilterEstimate {
  enum class Source { kDataDriven, kAnalytical };
  SpectrumSeries gain;  // complex, on the Welch grid
  // Bins whose idler PSD fell below the suppression threshold; their gain is
  // zeroed.
  std::vector<std::size_t> suppressed_bins;
  Source source = Source::kDataDriven;
};

struct WienerOptions {
  // kInSample estimates the gain from the full record (the single-record
  // procedure); kUnbiased estimates from the first half only so the filter
  // can be applied out-of-sample to the second half.
  enum class Bias { kInSample, kUnbiased };
  Bias bias = Bias::kInSample;
  bool smooth_gain = false;  // optional 3-bin moving average of the gain
  double suppression_epsilon = 1e-6;  // threshold = eps * median idler PSD
};

struct ConditioningResult {
  std::vector<double> conditioned;  // q_s + g * Q_i, full record length
  SpectrumSeries spectrum;          // Welch PSD of the conditioned record
};

struct Spectrogram {
  std::vector<double> theta_s;                 // radians, ascending
  FrequencyGrid grid;
  std::vector<std::vector<double>> values_db;  // [theta index][bin], dB re shot
};

// Band-averaged summary of a real series (mean with standard error), the
// error-bar convention used for reported squeezing numbers.
struct BandStats {
  double mean = 0.0;
  double stderr_of_mean = 0.0;
  std::size_t bins = 0;
};

// Drops fraction/2 of the samples at each end of a circularly synthesized
// record before Welch splitting, removing the periodic seam.
std::vector<double> trim_guard(const std::vector<double>& x, double fraction);

// One-sided Welch power spectral density of a real record.
SpectrumSeries welch_psd(const std::vector<double>& x, double sample_rate_hz,
                         const WelchConfig& cfg);

// One-sided Welch cross-spectral density <X * conj(Y)>.
SpectrumSeries welch_csd(const std::vector<double>& x, const std::vector<double>& y,
                         double sample_rate_hz, const WelchConfig& cfg);

// Data-driven conditioning gain g = -CSD(signal, idler)/PSD(idler) per bin.
WienerFilterEstimate estimate_wiener(const synth::TimeSeriesPair& pair,
                                     const WelchConfig& cfg,
                                     const WienerOptions& opt = {});

// Wraps an analytically computed gain series as a filter estimate.
WienerFilterEstimate filter_from_gain(SpectrumSeries gain);

// Applies the (noncausal) filter by overlap-add fast convolution and returns
// the conditioned record plus its Welch spectrum on the same config.
ConditioningResult apply_conditioning(const synth::TimeSeriesPair& pair,
                                      const WienerFilterEstimate& filter,
                                      const WelchConfig& cfg);

// Assembles conditioned spectra taken at >= 3 distinct homodyne angles into
// a dB spectrogram relative to `shot_reference` (same units as the spectra).
Spectrogram build_spectrogram(
    const std::vector<std::pair<double, SpectrumSeries>>& entries,
    double shot_reference);

// Per-bin angle of minimal noise: argmin over the (pi-periodic) angle axis
// with parabolic sub-sample refinement. Values in [0, pi).
SpectrumSeries extract_angle_trajectory(const Spectrogram& sg);

// 10*log10(S/reference) per bin; input must be a PSD, output is a real
// dimensionless log-ratio series (tagged kGain).
SpectrumSeries db_normalize(const SpectrumSeries& spectrum, double shot_reference);

// Mean and standard error of the real part over bins with lo <= f <= hi.
BandStats band_stats(const SpectrumSeries& s, double lo_hz, double hi_hz);

// Centered running median with the window truncated at the edges; where the
// truncated window has even length the two middle order statistics are
// averaged. `window` must be odd. Robust smoother for per-bin chi-square
// weights and noisy gain magnitudes: a single outlier bin moves the median
// by at most one order statistic, where it would drag a mean arbitrarily.
std::vector<double> running_median(const std::vector<double>& x, std::size_t window);

}  // namespace sqz::est
