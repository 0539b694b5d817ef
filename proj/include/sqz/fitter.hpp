// Chi-square parameter recovery against the spectral model, filter-cavity
// trajectory fitting, and noise-improvement projections.
//
// Parameter space conventions: free parameters are addressed by name and
// expressed in the boundary units used throughout the library — Hz for
// frequencies and rates, radians for angles, dimensionless otherwise.
// Recognized names:
//   "larmor", "readout", "decay", "bb_readout", "bb_decay", "n_th", "n_bb"
//   (spin), "r", "eta_s", "eta_i_in", "eta_i_out" (source/efficiencies),
//   "theta_s", "delta_theta_i" (detection).
// The sign of "larmor" carries the effective-mass sign and may be fitted
// across either sign by choosing the bounds accordingly.
//
// Observed spectra must be expressed in shot-noise units (vacuum = 1,
// Normalization::kShotNoise). A Welch estimate in physical units converts by
// dividing by the vacuum level 2/fs.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sqz/types.hpp"

namespace sqz::fit {

// Which analytic curve a data series is compared against.
enum class FitTarget {
  kIdlerPsd,        // idler homodyne PSD (real)
  kCrossCsd,        // signal-idler cross spectrum (complex)
  kConditionalPsd,  // conditioned signal PSD (real)
  kSignalPsd,       // unconditioned signal PSD (real, flat)
};

// One measured spectrum entering the chi-square sum. For complex targets the
// variance applies to the real and imaginary parts separately and each bin
// contributes two residuals.
struct ObservedSeries {
  SpectrumSeries data;
  std::vector<double> variance;  // per bin, > 0
  FitTarget target = FitTarget::kIdlerPsd;
  // Added to the current "theta_s" parameter when evaluating angle-dependent
  // targets; lets one problem hold series recorded at several known relative
  // homodyne angles.
  double theta_offset = 0.0;
};

// Box constraint for one named free parameter.
struct ParamBound {
  std::string name;
  double lo = 0.0;
  double hi = 0.0;
};

// The base params supply both the fixed values and the initial guess for the
// free ones; the guess must lie inside its bounds.
struct FitProblem {
  SpinParams spin;
  EprParams epr;
  DetectionConfig det;
  std::vector<ObservedSeries> observed;
  std::vector<ParamBound> free_params;
  double band_lo_hz = 0.0;
  double band_hi_hz = 1e18;
};

struct FitOptions {
  std::uint64_t seed = 0;
  std::size_t restarts = 5;        // first start exact, the rest jittered
  double jitter = 0.10;            // relative start perturbation
  std::size_t max_evaluations = 20000;  // per restart
  // When true and "n_bb" is not free, the broadband occupation tracks the
  // current thermal occupation during the search.
  bool tie_n_bb_to_n_th = true;
};

struct FitResult {
  std::map<std::string, double> estimates;  // free parameters only
  double chi2 = 0.0;
  std::size_t dof = 0;  // residual count minus free-parameter count
  // 1-sigma from the local quadratic expansion of chi2; +infinity where the
  // curvature is non-positive or the optimum sits on a bound.
  std::map<std::string, double> per_param_uncertainty;
  bool converged = false;
  std::size_t evaluations = 0;  // total objective evaluations, all restarts
};

// Minimizes sum over bins of (observed - model)^2 / variance with a bounded
// derivative-free simplex search: `restarts` starts (the first at the base
// values, the rest jittered by `jitter` relative, clipped into bounds),
// keeping the best. Deterministic given options.seed. Convergence is declared
// when the relative chi-square spread across the simplex falls below 1e-9
// (with a 1e-12 absolute floor) together with a 1e-6 relative coordinate
// spread; exhausting the budget yields converged = false, never a throw.
// Parameter combinations the model rejects score +infinity and are abandoned
// by the search.
FitResult fit_model(const FitProblem& problem, const FitOptions& options = {});

// Fits the detuned-cavity quadrature-rotation angle to an extracted angle
// trajectory (kind kAngle, radians). Both branch orientations of the cavity
// phase and their half-turn images are tried from a small grid of starts; the
// winner is refined and reported as CavityParams carrying the given finesse.
// Residuals are half-turn-wrapped angle differences, so trajectories are
// compared modulo the pi periodicity of quadrature angles. Under that metric
// the rotation profile determines only the unordered pair of rates (the
// branch orientations swap roles exactly), so the result is canonicalized to
// detuning <= bandwidth — the sub-linewidth-detuning convention.
// A trajectory whose circular spread is too small to constrain the rotation
// throws FitSetupError.
std::pair<CavityParams, FitResult> fit_cavity_equivalent(
    const SpectrumSeries& trajectory, double finesse,
    const FitOptions& options = {});

// Hypothetical-improvement scenario: thermal occupation and broadband readout
// rate divided by the given factors (>= 1; +infinity allowed).
struct ImprovementScenario {
  double n_th_divisor = 1.0;
  double bb_readout_divisor = 1.0;
};

// Conditional spectrum at the per-bin minimizing homodyne angle, evaluated
// with n_th and the broadband readout rate reduced per the scenario. The
// result never exceeds the baseline (divisors = 1) anywhere. Shot-noise
// units, kind kPsd.
SpectrumSeries project_improvement(const SpinParams& spin, const EprParams& epr,
                                   const DetectionConfig& det,
                                   const FrequencyGrid& grid,
                                   const ImprovementScenario& scenario);

}  // namespace sqz::fit
