#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sqz/types.hpp"

// Seeded generation of two-channel photocurrent records whose Welch spectra
// converge to the closed-form model predictions.
//
// Construction: independent complex circular Gaussian amplitudes are drawn
// for every noise source at every positive frequency bin (two squeezed
// vacuum modes, the input-coupling vacuum pair, thermal and broadband baths,
// the output and signal-path vacua), colored by the transfer relations of
// the lossy wave-plate model, and inverse-transformed to real time series.
// The synthesis is circulant (periodic); analyses that Welch-split a record
// should discard a guard fraction at the edges (see estimator::trim_guard).
//
// Determinism: identical configs (same seed) produce bit-identical records,
// independent of the worker count — every (source, frequency-block) pair has
// its own deterministically derived generator.
namespace sqz::synth {

struct SynthesisConfig {
  double sample_rate_hz = 0.0;
  double duration_s = 0.0;
  std::uint64_t seed = 0;
  SpinParams spin;
  EprParams epr;
  DetectionConfig det;
  // Homodyne angles (radians) to synthesize signal channels for; all share
  // the same underlying noise draws and the same idler. Empty means "use
  // det.theta_s only".
  std::vector<double> theta_s_list;

  // Number of samples (sample_rate_hz * duration_s, which must be an even
  // integer >= 16).
  std::size_t sample_count() const;
  std::vector<double> resolved_thetas() const;
  std::uint64_t digest() const;
  void validate() const;
};

// One signal/idler record pair in shot-noise-normalized units (a pure vacuum
// channel has one-sided PSD 2/sample_rate).
struct TimeSeriesPair {
  std::vector<double> signal;
  std::vector<double> idler;
  double sample_rate_hz = 0.0;
  // Where the data came from: "synth-<digest>" or an ingestion tag.
  std::string provenance;

  void validate() const;
};

// All channels of one synthesis run: a single idler record plus one signal
// record per requested homodyne angle, sharing the same noise realization.
struct SynthesisResult {
  double sample_rate_hz = 0.0;
  std::vector<double> thetas;  // radians, matches signals[]
  std::vector<double> idler;
  std::vector<std::vector<double>> signals;
  std::string provenance;

  // Copies channel `theta_index` out as a standalone pair.
  TimeSeriesPair pair(std::size_t theta_index) const;
};

SynthesisResult synthesize(const SynthesisConfig& cfg);

// Worker threads used for block-parallel synthesis: the SQZ_WORKERS
// environment variable when set (clamped to [1, 1024]), otherwise the
// hardware concurrency. Results never depend on this value.
unsigned resolve_worker_count();

}  // namespace sqz::synth
