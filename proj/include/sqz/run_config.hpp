#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sqz/estimator.hpp"
#include "sqz/fitter.hpp"
#include "sqz/types.hpp"

// Strict JSON run configuration for the command-line tool.
//
// Schema: a single JSON object with a required integer "schema_version" (must
// be 1) and optional sections "spin", "epr", "detection", "simulate",
// "welch", "analyze", "fit", "cavity", "predict". Every key is checked:
// unknown or missing-required keys raise ValidationError naming the full
// dotted path (e.g. `unknown config key "simulate.thetas"`), so typos never
// silently fall back to defaults.
//
// Units in files are human units — Hz for frequencies and rates, degrees for
// angles, seconds for durations — and are converted to the library's internal
// radians / rad/s representation here, at the boundary. Fit bounds follow the
// same rule: bounds on frequency-like parameters are given in Hz, bounds on
// "theta_s" / "delta_theta_i" in degrees.
//
// Precedence: command-line flags override config values (`--seed` replaces
// simulate.seed and fit.seed; `--out` and `--format` exist only as flags).
namespace sqz::cfg {

struct SimulateSection {
  double sample_rate_hz = 0.0;  // required
  double duration_s = 0.0;      // required
  std::uint64_t seed = 1;
  std::vector<double> theta_s;  // radians (config key "theta_s_deg")
};

struct AnalyzeSection {
  double guard_fraction = 0.10;  // edge fraction discarded before Welch splitting
  double band_lo_hz = 3.0e3;
  double band_hi_hz = 60.0e3;
  bool zero_gain = false;    // skip conditioning; conditional output == signal PSD
  bool unbiased = false;     // learn the gain on the first half, apply to the second
  bool smooth_gain = false;  // running-median smoothing of the Wiener gain
};

struct FitSection {
  // After load, bounds are in the fitter's units: Hz for rates, radians for
  // angles (only the angle bounds need converting from the file's degrees).
  std::vector<fit::ParamBound> free_params;
  double band_lo_hz = 3.0e3;
  double band_hi_hz = 60.0e3;
  std::uint64_t seed = 0;
  std::size_t restarts = 5;
  std::size_t max_evaluations = 20000;
  double jitter = 0.10;
  bool tie_n_bb_to_n_th = true;
};

struct CavitySection {
  double finesse = 0.0;  // required, > 0
};

struct PredictSection {
  double grid_lo_hz = 1.0e3;
  double grid_hi_hz = 100.0e3;
  std::size_t grid_points = 512;
  std::vector<double> theta_s;  // radians (config key "theta_s_deg")
  std::optional<fit::ImprovementScenario> improve;
};

struct RunConfig {
  int schema_version = 1;
  std::optional<SpinParams> spin;
  std::optional<EprParams> epr;
  std::optional<DetectionConfig> detection;
  std::optional<SimulateSection> simulate;
  std::optional<est::WelchConfig> welch;
  std::optional<AnalyzeSection> analyze;
  std::optional<FitSection> fit;
  std::optional<CavitySection> cavity;
  std::optional<PredictSection> predict;
};

// Parses and validates a config document. Throws ValidationError with the
// offending dotted key path on any schema violation.
RunConfig parse_run_config(const std::string& json_text);

// Reads the file and parses it; DataError if the file cannot be read.
RunConfig load_run_config(const std::string& path);

}  // namespace sqz::cfg
