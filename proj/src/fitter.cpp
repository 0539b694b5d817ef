#include "sqz/fitter.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <set>

#include "sqz/rng.hpp"
#include "sqz/spectral_model.hpp"

namespace sqz::fit {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Bounded Nelder-Mead simplex search
// ---------------------------------------------------------------------------

struct SimplexOptions {
  double xtol_rel = 1e-6;
  double ftol_rel = 1e-9;
  double ftol_abs = 1e-12;
  std::size_t max_evaluations = 20000;
};

struct SimplexOutcome {
  std::vector<double> x;
  double fx = kInf;
  bool converged = false;
  std::size_t evaluations = 0;
};

using Objective = std::function<double(const std::vector<double>&)>;
using Bounds = std::vector<std::pair<double, double>>;

void clip_into(std::vector<double>& x, const Bounds& b) {
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] = std::clamp(x[i], b[i].first, b[i].second);
}

// Dimension-adaptive reflection/expansion/contraction/shrink coefficients;
// candidates are projected onto the box before evaluation.
SimplexOutcome nelder_mead(const Objective& fn, std::vector<double> x0,
                           const Bounds& bounds, const SimplexOptions& opt) {
  const std::size_t n = x0.size();
  const double nd = static_cast<double>(n);
  const double rho = 1.0;
  const double chi = 1.0 + 2.0 / nd;
  const double psi = 0.75 - 0.5 / nd;
  const double sigma = 1.0 - 1.0 / nd;

  clip_into(x0, bounds);

  std::vector<std::vector<double>> sim(n + 1, x0);
  for (std::size_t i = 0; i < n; ++i) {
    auto& v = sim[i + 1];
    v[i] = (v[i] != 0.0) ? v[i] * 1.05 : 0.00025;
    clip_into(v, bounds);
    if (v[i] == x0[i]) {
      // The displaced vertex clipped back onto the start; step inward instead.
      const double span = bounds[i].second - bounds[i].first;
      v[i] = std::clamp(x0[i] - 0.05 * std::max(std::abs(x0[i]), 1e-3 * span),
                        bounds[i].first, bounds[i].second);
    }
  }

  SimplexOutcome out;
  std::vector<double> f(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    f[i] = fn(sim[i]);
    ++out.evaluations;
  }

  std::vector<std::size_t> order(n + 1);
  auto sort_simplex = [&] {
    for (std::size_t i = 0; i <= n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return f[a] < f[b]; });
    std::vector<std::vector<double>> s2(n + 1);
    std::vector<double> f2(n + 1);
    for (std::size_t i = 0; i <= n; ++i) {
      s2[i] = std::move(sim[order[i]]);
      f2[i] = f[order[i]];
    }
    sim = std::move(s2);
    f = std::move(f2);
  };
  sort_simplex();

  auto eval = [&](std::vector<double> x) {
    clip_into(x, bounds);
    const double v = fn(x);
    ++out.evaluations;
    return std::make_pair(std::move(x), v);
  };

  while (out.evaluations < opt.max_evaluations) {
    // Convergence: chi-square and coordinate spread across the simplex.
    double fspread = 0.0;
    for (std::size_t i = 1; i <= n; ++i)
      fspread = std::max(fspread, std::abs(f[i] - f[0]));
    bool xok = true;
    for (std::size_t i = 1; i <= n && xok; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double scale = std::max(std::abs(sim[0][j]),
                                      1e-3 * (bounds[j].second - bounds[j].first));
        if (std::abs(sim[i][j] - sim[0][j]) > opt.xtol_rel * scale) {
          xok = false;
          break;
        }
      }
    if (xok && fspread <= std::max(opt.ftol_rel * std::abs(f[0]), opt.ftol_abs)) {
      out.converged = true;
      break;
    }

    std::vector<double> centroid(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) centroid[j] += sim[i][j] / nd;

    auto along = [&](double t) {
      std::vector<double> x(n);
      for (std::size_t j = 0; j < n; ++j)
        x[j] = centroid[j] + t * (centroid[j] - sim[n][j]);
      return x;
    };

    auto [xr, fr] = eval(along(rho));
    bool shrink = false;
    if (fr < f[0]) {
      auto [xe, fe] = eval(along(rho * chi));
      if (fe < fr) {
        sim[n] = std::move(xe);
        f[n] = fe;
      } else {
        sim[n] = std::move(xr);
        f[n] = fr;
      }
    } else if (fr < f[n - 1]) {
      sim[n] = std::move(xr);
      f[n] = fr;
    } else if (fr < f[n]) {
      auto [xc, fc] = eval(along(rho * psi));  // outside contraction
      if (fc <= fr) {
        sim[n] = std::move(xc);
        f[n] = fc;
      } else {
        shrink = true;
      }
    } else {
      auto [xc, fc] = eval(along(-psi));  // inside contraction
      if (fc < f[n]) {
        sim[n] = std::move(xc);
        f[n] = fc;
      } else {
        shrink = true;
      }
    }
    if (shrink) {
      for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t j = 0; j < n; ++j)
          sim[i][j] = sim[0][j] + sigma * (sim[i][j] - sim[0][j]);
        clip_into(sim[i], bounds);
        f[i] = fn(sim[i]);
        ++out.evaluations;
      }
    }
    sort_simplex();
  }

  sort_simplex();
  out.x = sim[0];
  out.fx = f[0];
  return out;
}

// Curvature-based 1-sigma: chi2 grows by 1 at one sigma, so
// sigma_i = sqrt(2 / d2chi2/dp2). Steps shrink to stay inside bounds.
double curvature_sigma(const Objective& fn, const std::vector<double>& x,
                       std::size_t i, const Bounds& bounds, double f0,
                       std::size_t& evaluations) {
  const double span = bounds[i].second - bounds[i].first;
  double h = 1e-3 * std::max(std::abs(x[i]), 1e-2 * span);
  h = std::min({h, x[i] - bounds[i].first, bounds[i].second - x[i]});
  if (!(h > 0.0)) return kInf;
  auto shifted = [&](double step) {
    std::vector<double> y = x;
    y[i] += step;
    return fn(y);
  };
  const double fp = shifted(h);
  const double fm = shifted(-h);
  evaluations += 2;
  const double d2 = (fp - 2.0 * f0 + fm) / (h * h);
  if (!(d2 > 0.0)) return kInf;
  return std::sqrt(2.0 / d2);
}

// ---------------------------------------------------------------------------
// Named parameter table (boundary units: Hz / radians / dimensionless)
// ---------------------------------------------------------------------------

// Order fixes the index each fit coordinate refers to.
const char* const kParamNames[] = {
    "larmor", "readout",  "decay",    "bb_readout", "bb_decay",      "n_th", "n_bb",
    "r",      "eta_s",    "eta_i_in", "eta_i_out",  "theta_s",       "delta_theta_i",
};
constexpr std::size_t kParamCount = sizeof(kParamNames) / sizeof(kParamNames[0]);

std::size_t param_index(const std::string& name) {
  for (std::size_t i = 0; i < kParamCount; ++i)
    if (name == kParamNames[i]) return i;
  throw FitSetupError("unknown fit parameter \"" + name + "\"");
}

struct ParamTable {
  double v[kParamCount] = {};

  static ParamTable from(const SpinParams& spin, const EprParams& epr,
                         const DetectionConfig& det) {
    ParamTable t;
    t.v[0] = rad_to_hz(spin.larmor);
    t.v[1] = rad_to_hz(spin.readout);
    t.v[2] = rad_to_hz(spin.decay);
    t.v[3] = rad_to_hz(spin.bb_readout);
    t.v[4] = rad_to_hz(spin.bb_decay);
    t.v[5] = spin.n_th;
    t.v[6] = spin.n_bb;
    t.v[7] = epr.r;
    t.v[8] = epr.eta_s;
    t.v[9] = epr.eta_i_in;
    t.v[10] = epr.eta_i_out;
    t.v[11] = det.theta_s;
    t.v[12] = det.delta_theta_i;
    return t;
  }

  SpinParams spin() const {
    return SpinParams::from_hz(v[0], v[1], v[2], v[3], v[4], v[5], v[6]);
  }
  EprParams epr() const { return EprParams{v[7], v[8], v[9], v[10]}; }
  DetectionConfig det() const {
    DetectionConfig d;
    d.theta_s = v[11];
    d.delta_theta_i = v[12];
    return d;
  }
};

struct PreparedSeries {
  FrequencyGrid grid;  // band-limited
  std::vector<double> re, im;  // observed values (im used for complex targets)
  std::vector<double> var;
  FitTarget target = FitTarget::kIdlerPsd;
  double theta_offset = 0.0;
};

// Model curves are produced in absolute units (vacuum = kShotNoiseUnit) while
// observations arrive in shot-noise units (vacuum = 1); this converts.
constexpr double kToShotNoise = 1.0 / kShotNoiseUnit;

double series_chi2(const PreparedSeries& s, const model::ModelEvaluator& ev,
                   double theta_s) {
  double acc = 0.0;
  switch (s.target) {
    case FitTarget::kIdlerPsd: {
      const auto m = ev.idler_psd();
      for (std::size_t k = 0; k < s.re.size(); ++k) {
        const double d = s.re[k] - m[k] * kToShotNoise;
        acc += d * d / s.var[k];
      }
      break;
    }
    case FitTarget::kCrossCsd: {
      const auto m = ev.cross_csd(theta_s + s.theta_offset);
      for (std::size_t k = 0; k < s.re.size(); ++k) {
        const double dr = s.re[k] - m[k].real() * kToShotNoise;
        const double di = s.im[k] - m[k].imag() * kToShotNoise;
        acc += (dr * dr + di * di) / s.var[k];
      }
      break;
    }
    case FitTarget::kConditionalPsd: {
      const auto m = ev.conditional(theta_s + s.theta_offset);
      for (std::size_t k = 0; k < s.re.size(); ++k) {
        const double d = s.re[k] - m[k];
        acc += d * d / s.var[k];
      }
      break;
    }
    case FitTarget::kSignalPsd: {
      const double m = ev.signal_psd() * kToShotNoise;
      for (std::size_t k = 0; k < s.re.size(); ++k) {
        const double d = s.re[k] - m;
        acc += d * d / s.var[k];
      }
      break;
    }
  }
  return acc;
}

}  // namespace

FitResult fit_model(const FitProblem& problem, const FitOptions& options) {
  problem.spin.validate();
  problem.epr.validate();
  problem.det.validate();
  if (problem.observed.empty())
    throw FitSetupError("fit problem holds no observed series");
  if (!(problem.band_lo_hz <= problem.band_hi_hz))
    throw FitSetupError("fit band is inverted");
  if (options.restarts == 0 || options.max_evaluations == 0)
    throw FitSetupError("fit options must allow at least one start and evaluation");
  if (!(options.jitter >= 0.0) || !std::isfinite(options.jitter))
    throw FitSetupError("fit jitter must be finite and >= 0");

  // Free-parameter bookkeeping.
  const std::size_t nfree = problem.free_params.size();
  std::vector<std::size_t> idx(nfree);
  Bounds bounds(nfree);
  std::set<std::string> seen;
  const ParamTable base =
      ParamTable::from(problem.spin, problem.epr, problem.det);
  std::vector<double> x0(nfree);
  for (std::size_t i = 0; i < nfree; ++i) {
    const auto& fp = problem.free_params[i];
    idx[i] = param_index(fp.name);
    if (!seen.insert(fp.name).second)
      throw FitSetupError("fit parameter \"" + fp.name + "\" listed twice");
    if (!std::isfinite(fp.lo) || !std::isfinite(fp.hi) || !(fp.lo < fp.hi))
      throw FitSetupError("bounds for \"" + fp.name + "\" must be finite with lo < hi");
    x0[i] = base.v[idx[i]];
    if (x0[i] < fp.lo || x0[i] > fp.hi)
      throw FitSetupError("initial value of \"" + fp.name + "\" lies outside its bounds");
    bounds[i] = {fp.lo, fp.hi};
  }
  const bool tie_n_bb =
      options.tie_n_bb_to_n_th && seen.find("n_bb") == seen.end();

  // Band-limit every observed series once.
  std::vector<PreparedSeries> prepared;
  std::size_t residuals = 0;
  for (const auto& obs : problem.observed) {
    if (obs.data.values.empty())
      throw FitSetupError("observed series is empty");
    if (obs.variance.size() != obs.data.values.size())
      throw FitSetupError("variance length does not match the observed series");
    if (obs.data.normalization != Normalization::kShotNoise)
      throw FitSetupError("observed spectra must be in shot-noise units");
    const bool complex_target = obs.target == FitTarget::kCrossCsd;
    if (complex_target && obs.data.kind != SeriesKind::kCsd)
      throw FitSetupError("cross-spectrum target requires a kCsd series");
    if (!complex_target && obs.data.kind == SeriesKind::kCsd)
      throw FitSetupError("real-valued target given a kCsd series");
    if (!std::isfinite(obs.theta_offset))
      throw FitSetupError("series angle offset must be finite");

    PreparedSeries p;
    p.target = obs.target;
    p.theta_offset = obs.theta_offset;
    std::vector<double> omega;
    for (std::size_t k = 0; k < obs.data.values.size(); ++k) {
      const double f = obs.data.grid.value_hz(k);
      if (f < problem.band_lo_hz || f > problem.band_hi_hz) continue;
      if (!(obs.variance[k] > 0.0) || !std::isfinite(obs.variance[k]))
        throw FitSetupError("per-bin variance must be finite and > 0");
      omega.push_back(obs.data.grid.values()[k]);
      p.re.push_back(obs.data.values[k].real());
      if (complex_target) p.im.push_back(obs.data.values[k].imag());
      p.var.push_back(obs.variance[k]);
    }
    if (omega.empty()) continue;  // series entirely outside the band
    p.grid = FrequencyGrid(std::move(omega));
    residuals += p.re.size() * (complex_target ? 2 : 1);
    prepared.push_back(std::move(p));
  }
  if (prepared.empty())
    throw FitSetupError("fit band excludes every observed bin");
  if (residuals <= nfree)
    throw FitSetupError("fit needs more residuals than free parameters");

  const Objective chi2 = [&](const std::vector<double>& x) {
    ParamTable t = base;
    for (std::size_t i = 0; i < nfree; ++i) t.v[idx[i]] = x[i];
    if (tie_n_bb) t.v[6] = t.v[5];
    try {
      const SpinParams spin = t.spin();
      const EprParams epr = t.epr();
      const DetectionConfig det = t.det();
      spin.validate();
      epr.validate();
      det.validate();
      double acc = 0.0;
      for (const auto& s : prepared) {
        const model::ModelEvaluator ev(spin, epr, det, s.grid);
        acc += series_chi2(s, ev, det.theta_s);
      }
      return acc;
    } catch (const Error&) {
      return kInf;  // out-of-domain point: let the search back away
    }
  };

  // Multi-start driver: first start exact, the rest jittered relative to the
  // initial guess and clipped into bounds. Deterministic given the seed.
  SimplexOptions sopt;
  sopt.max_evaluations = options.max_evaluations;
  FitResult result;
  SimplexOutcome best;
  bool have_best = false;
  for (std::size_t k = 0; k < options.restarts; ++k) {
    std::vector<double> xs = x0;
    if (k > 0) {
      rng::GaussianStream gs(rng::derive_seed(options.seed, k, 0));
      for (std::size_t i = 0; i < nfree; ++i)
        xs[i] = std::clamp(x0[i] * (1.0 + options.jitter * gs.normal()),
                           bounds[i].first, bounds[i].second);
    }
    SimplexOutcome run = nelder_mead(chi2, std::move(xs), bounds, sopt);
    result.evaluations += run.evaluations;
    if (!have_best || run.fx < best.fx) {
      best = std::move(run);
      have_best = true;
    }
  }

  result.chi2 = best.fx;
  result.dof = residuals - nfree;
  result.converged = best.converged;
  for (std::size_t i = 0; i < nfree; ++i) {
    result.estimates[problem.free_params[i].name] = best.x[i];
    result.per_param_uncertainty[problem.free_params[i].name] =
        curvature_sigma(chi2, best.x, i, bounds, best.fx, result.evaluations);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Filter-cavity trajectory fit
// ---------------------------------------------------------------------------

namespace {

// The cavity rotation angle in its two branch orientations plus their
// half-turn images; homogeneous in (w, d, g) so Hz arguments are fine.
double cavity_branch(int variant, double w, double d, double g) {
  double phi;
  if (variant == 0 || variant == 1)
    phi = std::atan(2.0 * d * g / (g * g - d * d + w * w));
  else
    phi = std::atan2(2.0 * d * g, g * g - d * d - w * w);
  if (variant == 1 || variant == 3) phi = kPi - phi;
  return phi;
}

// Signed distance between two quadrature angles (pi periodic).
double wrap_half_turn_diff(double x) { return std::remainder(x, kPi); }

}  // namespace

std::pair<CavityParams, FitResult> fit_cavity_equivalent(
    const SpectrumSeries& trajectory, double finesse, const FitOptions& options) {
  if (trajectory.kind != SeriesKind::kAngle)
    throw ValidationError("cavity fit expects an angle trajectory (kind kAngle)");
  if (!std::isfinite(finesse) || finesse <= 0.0)
    throw ValidationError("cavity finesse must be finite and > 0");
  const std::size_t n = trajectory.values.size();
  if (n < 3) throw FitSetupError("angle trajectory needs at least 3 bins");

  std::vector<double> w_hz(n), phi(n);
  for (std::size_t k = 0; k < n; ++k) {
    w_hz[k] = trajectory.grid.value_hz(k);
    double v = std::fmod(trajectory.values[k].real(), kPi);
    if (v < 0.0) v += kPi;
    phi[k] = v;
  }

  // Degeneracy guard: the circular spread of the wrapped angles must cover a
  // useful part of the rotation. The spread is pi minus the largest gap
  // between neighbouring samples on the half-turn circle.
  {
    std::vector<double> sorted = phi;
    std::sort(sorted.begin(), sorted.end());
    double max_gap = sorted.front() + kPi - sorted.back();
    for (std::size_t k = 1; k < n; ++k)
      max_gap = std::max(max_gap, sorted[k] - sorted[k - 1]);
    if (kPi - max_gap < 0.35)
      throw FitSetupError("angle trajectory is too flat to constrain the cavity fit");
  }

  FitResult result;
  const Bounds bounds{{50.0, 60e3}, {50.0, 60e3}};
  SimplexOptions sopt;
  sopt.max_evaluations = options.max_evaluations;

  SimplexOutcome best;
  int best_variant = 0;
  bool have_best = false;
  Objective best_chi2;
  for (int variant = 0; variant < 4; ++variant) {
    const Objective chi2 = [&, variant](const std::vector<double>& x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double r =
            wrap_half_turn_diff(cavity_branch(variant, w_hz[k], x[0], x[1]) - phi[k]);
        acc += r * r;
      }
      return acc;
    };
    for (double d0 : {2e3, 5e3, 10e3})
      for (double g0 : {5e3, 10e3, 15e3}) {
        SimplexOutcome run = nelder_mead(chi2, {d0, g0}, bounds, sopt);
        result.evaluations += run.evaluations;
        if (!have_best || run.fx < best.fx) {
          best = std::move(run);
          best_variant = variant;
          best_chi2 = chi2;
          have_best = true;
        }
      }
  }
  (void)best_variant;

  result.chi2 = best.fx;
  result.dof = n - 2;
  result.converged = best.converged;
  double d_hat = best.x[0], g_hat = best.x[1];
  double d_sigma =
      curvature_sigma(best_chi2, best.x, 0, bounds, best.fx, result.evaluations);
  double g_sigma =
      curvature_sigma(best_chi2, best.x, 1, bounds, best.fx, result.evaluations);
  // Under the half-turn-wrapped metric the branch family is exactly invariant
  // under exchanging the two rates across paired orientations, so the data
  // fix only the unordered pair. Report the sub-linewidth-detuning
  // assignment: detuning <= bandwidth.
  if (d_hat > g_hat) {
    std::swap(d_hat, g_hat);
    std::swap(d_sigma, g_sigma);
  }
  result.estimates["detuning"] = d_hat;
  result.estimates["bandwidth"] = g_hat;
  result.per_param_uncertainty["detuning"] = d_sigma;
  result.per_param_uncertainty["bandwidth"] = g_sigma;

  CavityParams cav;
  cav.detuning = hz_to_rad(d_hat);
  cav.bandwidth = hz_to_rad(g_hat);
  cav.finesse = finesse;
  cav.validate();
  return {cav, result};
}

// ---------------------------------------------------------------------------
// Improvement projection
// ---------------------------------------------------------------------------

SpectrumSeries project_improvement(const SpinParams& spin, const EprParams& epr,
                                   const DetectionConfig& det,
                                   const FrequencyGrid& grid,
                                   const ImprovementScenario& scenario) {
  if (!(scenario.n_th_divisor >= 1.0))
    throw ValidationError("n_th divisor must be >= 1");
  if (!(scenario.bb_readout_divisor >= 1.0))
    throw ValidationError("broadband readout divisor must be >= 1");
  SpinParams improved = spin;
  improved.n_th = spin.n_th / scenario.n_th_divisor;
  improved.bb_readout = spin.bb_readout / scenario.bb_readout_divisor;
  return model::conditional_spectrum_optimal_angle(improved, epr, det, grid);
}

}  // namespace sqz::fit
