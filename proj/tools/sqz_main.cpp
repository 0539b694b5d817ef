// Command-line driver: simulate records, analyze them into spectra and
// angle trajectories, fit model parameters, match filter-cavity equivalents,
// and evaluate closed-form predictions — all from a strict JSON config.
//
// Exit codes: 0 success, 2 configuration error, 3 data error,
// 4 fit did not converge (outputs are still written).
//
// Determinism: identical config + seed give byte-identical CSV outputs; the
// only timestamp lives in manifest.json. The SQZ_WORKERS environment
// variable caps synthesis worker threads (default: available parallelism);
// it never changes the produced samples.
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sqz/csv_io.hpp"
#include "sqz/digest.hpp"
#include "sqz/estimator.hpp"
#include "sqz/fitter.hpp"
#include "sqz/run_config.hpp"
#include "sqz/spectral_model.hpp"
#include "sqz/synthesizer.hpp"
#include "sqz/types.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace sqz;

namespace {

constexpr const char* kToolName = "sqz";
constexpr const char* kToolVersion = "1.0.0";

// ---------------------------------------------------------------------------
// Small helpers
// ---------------------------------------------------------------------------

std::string now_utc() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string theta_label(double theta_rad) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06.2f", rad_to_deg(theta_rad));
  return buf;
}

std::string stem_of(const std::string& path) {
  return fs::path(path).stem().string();
}

void ensure_out_dir(const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create output directory \"" + out_dir + "\"");
}

ordered_json finite_or_null(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

// Collects artifact names as they are written and assembles manifest.json —
// the one file allowed to carry a timestamp.
class Manifest {
 public:
  Manifest(std::string command, std::string out_dir)
      : command_(std::move(command)), out_dir_(std::move(out_dir)) {}

  void set_config(const std::string& path) {
    config_path_ = path;
    config_digest_ = io::file_digest_hex(path);
  }
  void set_seed(std::uint64_t seed) { seed_ = seed; }
  void set_extra(const std::string& key, const ordered_json& value) {
    extra_[key] = value;
  }
  void add_input(const std::string& path) {
    inputs_.push_back({{"path", path}, {"digest", io::file_digest_hex(path)}});
  }
  void add_file(const std::string& name) { files_.push_back(name); }

  void write() const {
    ordered_json j;
    j["tool"] = kToolName;
    j["version"] = kToolVersion;
    j["command"] = command_;
    j["created_utc"] = now_utc();
    if (seed_)
      j["seed"] = *seed_;
    else
      j["seed"] = nullptr;
    if (!config_path_.empty()) {
      j["config"] = config_path_;
      j["config_digest"] = config_digest_;
    }
    for (const auto& [k, v] : extra_.items()) j[k] = v;
    if (!inputs_.empty()) j["inputs"] = inputs_;
    ordered_json files = ordered_json::array();
    for (const auto& name : files_)
      files.push_back({{"name", name},
                       {"digest", io::file_digest_hex(out_dir_ + "/" + name)}});
    j["files"] = files;
    io::write_text_atomic(out_dir_ + "/manifest.json", j.dump(2) + "\n");
  }

 private:
  std::string command_, out_dir_, config_path_, config_digest_;
  std::optional<std::uint64_t> seed_;
  ordered_json extra_ = ordered_json::object();
  ordered_json inputs_ = ordered_json::array();
  std::vector<std::string> files_;
};

// Writes a spectrum series under the requested format and records it.
std::string emit_series(const std::string& out_dir, const std::string& base,
                        const SpectrumSeries& series, const std::string& format,
                        Manifest& manifest) {
  const std::string name = base + (format == "json" ? ".json" : ".csv");
  if (format == "json")
    io::write_spectrum_json(out_dir + "/" + name, series);
  else
    io::write_spectrum_csv(out_dir + "/" + name, series);
  manifest.add_file(name);
  return name;
}

// ---------------------------------------------------------------------------
// Shared config plumbing
// ---------------------------------------------------------------------------

struct Invocation {
  std::string config_path;
  std::string out_dir = "out";
  std::string format = "csv";
  std::vector<std::string> data;
  std::optional<std::uint64_t> seed;
};

cfg::RunConfig load_config(const Invocation& inv) {
  return cfg::load_run_config(inv.config_path);
}

const SpinParams& need_spin(const cfg::RunConfig& c, const char* cmd) {
  if (!c.spin)
    throw ValidationError(std::string("config section \"spin\" is required for ") + cmd);
  return *c.spin;
}
const EprParams& need_epr(const cfg::RunConfig& c, const char* cmd) {
  if (!c.epr)
    throw ValidationError(std::string("config section \"epr\" is required for ") + cmd);
  return *c.epr;
}
const DetectionConfig& need_det(const cfg::RunConfig& c, const char* cmd) {
  if (!c.detection)
    throw ValidationError(std::string("config section \"detection\" is required for ") +
                          cmd);
  return *c.detection;
}

// Fit estimates cross the CLI boundary in human units. The fitter's own axes
// are already Hz for rates; only angles (radians inside) need rescaling.
struct HumanUnit {
  const char* internal;
  const char* external;
  double scale;  // human = internal * scale
};

const HumanUnit kHumanUnits[] = {
    {"larmor", "larmor_hz", 1.0},
    {"readout", "readout_hz", 1.0},
    {"decay", "decay_hz", 1.0},
    {"bb_readout", "bb_readout_hz", 1.0},
    {"bb_decay", "bb_decay_hz", 1.0},
    {"theta_s", "theta_s_deg", 180.0 / kPi},
    {"delta_theta_i", "delta_theta_i_deg", 180.0 / kPi},
    {"n_th", "n_th", 1.0},
    {"n_bb", "n_bb", 1.0},
    {"r", "r", 1.0},
    {"eta_s", "eta_s", 1.0},
    {"eta_i_in", "eta_i_in", 1.0},
    {"eta_i_out", "eta_i_out", 1.0},
};

const HumanUnit& human_unit(const std::string& internal_name) {
  for (const auto& u : kHumanUnits)
    if (internal_name == u.internal) return u;
  throw ValidationError("unknown fit parameter \"" + internal_name + "\"");
}

// ---------------------------------------------------------------------------
// Analysis primitives shared by analyze and fit
// ---------------------------------------------------------------------------

struct LoadedRecord {
  synth::TimeSeriesPair pair;      // guard-trimmed
  double theta_s = 0.0;            // radians, from the record header
  std::string path;
  std::size_t raw_samples = 0;
};

LoadedRecord load_record(const std::string& path, double guard_fraction) {
  const io::PairRecord rec = io::read_pair_csv(path);
  LoadedRecord out;
  out.path = path;
  out.raw_samples = rec.signal.size();
  out.theta_s = wrap_angle(deg_to_rad(rec.theta_s_deg));
  out.pair.signal = est::trim_guard(rec.signal, guard_fraction);
  out.pair.idler = est::trim_guard(rec.idler, guard_fraction);
  out.pair.sample_rate_hz = rec.sample_rate_hz;
  out.pair.provenance = "file:" + path;
  out.pair.validate();
  return out;
}

// Nominal Welch segment count of a record of length n.
std::size_t segment_count(std::size_t n, const est::WelchConfig& w) {
  if (n < w.segment_length) return 0;
  return (n - w.segment_length) / w.step() + 1;
}

// Interpolated empirical counterpart of the closed-form SQL bandwidth: offset
// from the trajectory's 90-degree resonance crossing to the nearer crossing
// of a 45-degree rotation. Median-smoothed first so one noisy bin cannot
// fake a crossing. Returns nothing when the trajectory never completes the
// rotation inside the analyzed band.
std::optional<double> empirical_sql_bandwidth_hz(const SpectrumSeries& trajectory) {
  const std::size_t n = trajectory.size();
  if (n < 5) return std::nullopt;
  std::vector<double> raw(n);
  for (std::size_t k = 0; k < n; ++k) raw[k] = trajectory.values[k].real();
  const std::vector<double> ang = est::running_median(raw, 5);
  std::vector<double> dist(n);
  for (std::size_t k = 0; k < n; ++k) dist[k] = std::fabs(ang[k] - kPi / 2.0);
  std::size_t kmin = 0;
  for (std::size_t k = 1; k < n; ++k)
    if (dist[k] < dist[kmin]) kmin = k;
  if (dist[kmin] > kPi / 8.0) return std::nullopt;  // never reaches resonance

  const double f_res = trajectory.grid.value_hz(kmin);
  auto crossing_offset = [&](int dir) -> std::optional<double> {
    std::size_t k = kmin;
    while (true) {
      if (dir > 0 && k + 1 >= n) return std::nullopt;
      if (dir < 0 && k == 0) return std::nullopt;
      const std::size_t t = k + static_cast<std::size_t>(dir > 0 ? 1 : -1);
      if (dist[k] < kPi / 4.0 && dist[t] >= kPi / 4.0) {
        const double f0 = trajectory.grid.value_hz(k);
        const double f1 = trajectory.grid.value_hz(t);
        const double f = f0 + (kPi / 4.0 - dist[k]) / (dist[t] - dist[k]) * (f1 - f0);
        return std::fabs(f - f_res);
      }
      k = t;
    }
  };
  const auto up = crossing_offset(+1);
  const auto down = crossing_offset(-1);
  if (up && down) return std::min(*up, *down);
  if (up) return up;
  return down;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

int cmd_simulate(const Invocation& inv) {
  const cfg::RunConfig c = load_config(inv);
  if (!c.simulate)
    throw ValidationError("config section \"simulate\" is required for simulate");
  synth::SynthesisConfig scfg;
  scfg.sample_rate_hz = c.simulate->sample_rate_hz;
  scfg.duration_s = c.simulate->duration_s;
  scfg.seed = inv.seed.value_or(c.simulate->seed);
  scfg.spin = need_spin(c, "simulate");
  scfg.epr = need_epr(c, "simulate");
  scfg.det = need_det(c, "simulate");
  scfg.theta_s_list = c.simulate->theta_s;
  scfg.validate();

  ensure_out_dir(inv.out_dir);
  const synth::SynthesisResult result = synth::synthesize(scfg);

  Manifest manifest("simulate", inv.out_dir);
  manifest.set_config(inv.config_path);
  manifest.set_seed(scfg.seed);
  manifest.set_extra("synthesis_digest", digest::hex(scfg.digest()));
  for (std::size_t i = 0; i < result.thetas.size(); ++i) {
    const synth::TimeSeriesPair pair = result.pair(i);
    const std::string name = "record_theta" + theta_label(result.thetas[i]) + ".csv";
    io::write_pair_csv(inv.out_dir + "/" + name, pair.signal, pair.idler,
                       pair.sample_rate_hz, scfg.seed,
                       rad_to_deg(result.thetas[i]));
    manifest.add_file(name);
    std::cout << "wrote " << inv.out_dir << "/" << name << " ("
              << pair.signal.size() << " samples)\n";
  }
  manifest.write();
  std::cout << "wrote " << inv.out_dir << "/manifest.json\n";
  return 0;
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

int cmd_analyze(const Invocation& inv) {
  const cfg::RunConfig c = load_config(inv);
  const est::WelchConfig wcfg = c.welch.value_or(est::WelchConfig{});
  const cfg::AnalyzeSection acfg = c.analyze.value_or(cfg::AnalyzeSection{});
  ensure_out_dir(inv.out_dir);

  Manifest manifest("analyze", inv.out_dir);
  manifest.set_config(inv.config_path);

  est::WienerOptions wopt;
  wopt.bias = acfg.unbiased ? est::WienerOptions::Bias::kUnbiased
                            : est::WienerOptions::Bias::kInSample;
  wopt.smooth_gain = acfg.smooth_gain;

  ordered_json summary;
  summary["band_hz"] = {acfg.band_lo_hz, acfg.band_hi_hz};
  summary["records"] = ordered_json::array();
  std::vector<std::pair<double, SpectrumSeries>> sweep_entries;
  double common_fs = 0.0;

  for (const std::string& path : inv.data) {
    manifest.add_input(path);
    const LoadedRecord rec = load_record(path, acfg.guard_fraction);
    const double fs = rec.pair.sample_rate_hz;
    const double shot = 2.0 / fs;  // vacuum PSD of a shot-noise-normalized record
    if (common_fs == 0.0) common_fs = fs;

    const SpectrumSeries psd_s =
        est::welch_psd(rec.pair.signal, fs, wcfg);
    const SpectrumSeries psd_i =
        est::welch_psd(rec.pair.idler, fs, wcfg);
    const SpectrumSeries csd =
        est::welch_csd(rec.pair.signal, rec.pair.idler, fs, wcfg);

    est::WienerFilterEstimate filter;
    if (acfg.zero_gain) {
      SpectrumSeries zero(psd_i.grid,
                          std::vector<std::complex<double>>(psd_i.size(), 0.0),
                          Normalization::kAbsolute, SeriesKind::kGain);
      filter = est::filter_from_gain(std::move(zero));
    } else {
      filter = est::estimate_wiener(rec.pair, wcfg, wopt);
    }
    const est::ConditioningResult cond =
        est::apply_conditioning(rec.pair, filter, wcfg);

    // Shot-normalized CSD for downstream fitting; PSDs and the conditional
    // spectrum as dB relative to vacuum.
    SpectrumSeries csd_sn = csd;
    for (auto& v : csd_sn.values) v /= shot;
    csd_sn.normalization = Normalization::kShotNoise;

    const std::string stem = stem_of(path);
    emit_series(inv.out_dir, stem + "_psd_signal", est::db_normalize(psd_s, shot),
                inv.format, manifest);
    emit_series(inv.out_dir, stem + "_psd_idler", est::db_normalize(psd_i, shot),
                inv.format, manifest);
    emit_series(inv.out_dir, stem + "_csd", csd_sn, inv.format, manifest);
    emit_series(inv.out_dir, stem + "_gain", filter.gain, inv.format, manifest);
    const SpectrumSeries cond_db = est::db_normalize(cond.spectrum, shot);
    emit_series(inv.out_dir, stem + "_conditional", cond_db, inv.format, manifest);

    const est::BandStats sig_stats =
        est::band_stats(est::db_normalize(psd_s, shot), acfg.band_lo_hz,
                        acfg.band_hi_hz);
    const est::BandStats cond_stats =
        est::band_stats(cond_db, acfg.band_lo_hz, acfg.band_hi_hz);
    double min_db = 0.0, min_freq = 0.0;
    bool have_min = false;
    for (std::size_t k = 0; k < cond_db.size(); ++k) {
      const double f = cond_db.grid.value_hz(k);
      if (f < acfg.band_lo_hz || f > acfg.band_hi_hz) continue;
      const double v = cond_db.values[k].real();
      if (!have_min || v < min_db) {
        min_db = v;
        min_freq = f;
        have_min = true;
      }
    }

    ordered_json entry;
    entry["path"] = path;
    entry["theta_s_deg"] = rad_to_deg(rec.theta_s);
    entry["samples_after_guard"] = rec.pair.signal.size();
    entry["signal_band_db"] = {{"mean", sig_stats.mean},
                               {"stderr", sig_stats.stderr_of_mean}};
    entry["conditional_band_db"] = {{"mean", cond_stats.mean},
                                    {"stderr", cond_stats.stderr_of_mean}};
    entry["conditional_min_db"] = have_min ? ordered_json(min_db) : nullptr;
    entry["conditional_min_freq_hz"] = have_min ? ordered_json(min_freq) : nullptr;
    summary["records"].push_back(entry);

    if (fs != common_fs)
      throw DataError("records disagree on sample rate: \"" + path + "\" has " +
                      format_double(fs) + " Hz, expected " +
                      format_double(common_fs));
    sweep_entries.emplace_back(rec.theta_s, cond.spectrum);
  }

  // Three or more angles form a sweep: spectrogram, per-bin optimal angle,
  // and the empirical counterpart of the closed-form SQL bandwidth.
  if (sweep_entries.size() >= 3) {
    const double shot = 2.0 / common_fs;
    const est::Spectrogram sg = est::build_spectrogram(sweep_entries, shot);
    const std::string sg_name =
        std::string("spectrogram") + (inv.format == "json" ? ".json" : ".csv");
    if (inv.format == "json")
      io::write_spectrogram_json(inv.out_dir + "/" + sg_name, sg);
    else
      io::write_spectrogram_csv(inv.out_dir + "/" + sg_name, sg);
    manifest.add_file(sg_name);

    SpectrumSeries trajectory = est::extract_angle_trajectory(sg);
    emit_series(inv.out_dir, "trajectory", trajectory, inv.format, manifest);

    // Restrict the crossing search to the analysis band.
    std::vector<double> band_omega;
    std::vector<std::complex<double>> band_vals;
    for (std::size_t k = 0; k < trajectory.size(); ++k) {
      const double f = trajectory.grid.value_hz(k);
      if (f < acfg.band_lo_hz || f > acfg.band_hi_hz) continue;
      band_omega.push_back(trajectory.grid[k]);
      band_vals.push_back(trajectory.values[k]);
    }
    std::optional<double> emp;
    if (band_omega.size() >= 5) {
      const SpectrumSeries banded(FrequencyGrid(std::move(band_omega)),
                                  std::move(band_vals), trajectory.normalization,
                                  SeriesKind::kAngle);
      emp = empirical_sql_bandwidth_hz(banded);
    }
    summary["sql_bandwidth_empirical_hz"] =
        emp ? ordered_json(*emp) : ordered_json(nullptr);
  }

  io::write_text_atomic(inv.out_dir + "/summary.json", summary.dump(2) + "\n");
  manifest.add_file("summary.json");
  manifest.write();
  std::cout << "analyzed " << inv.data.size() << " record(s) into " << inv.out_dir
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

int cmd_fit(const Invocation& inv) {
  const cfg::RunConfig c = load_config(inv);
  if (!c.fit) throw ValidationError("config section \"fit\" is required for fit");
  const est::WelchConfig wcfg = c.welch.value_or(est::WelchConfig{});
  const cfg::AnalyzeSection acfg = c.analyze.value_or(cfg::AnalyzeSection{});
  const cfg::FitSection& fcfg = *c.fit;

  const LoadedRecord rec = load_record(inv.data.front(), acfg.guard_fraction);
  const double fs = rec.pair.sample_rate_hz;
  const double shot = 2.0 / fs;
  const std::size_t nseg = segment_count(rec.pair.signal.size(), wcfg);
  if (nseg < 2)
    throw DataError("record \"" + inv.data.front() +
                    "\" is too short for the Welch configuration");

  // Observations in shot-noise units: idler PSD plus signal-idler CSD.
  const SpectrumSeries psd_i = est::welch_psd(rec.pair.idler, fs, wcfg);
  const SpectrumSeries csd = est::welch_csd(rec.pair.signal, rec.pair.idler, fs, wcfg);
  const SpectrumSeries psd_s = est::welch_psd(rec.pair.signal, fs, wcfg);
  const std::size_t nb = psd_i.size();
  std::vector<double> obs_p(nb), obs_s(nb);
  std::vector<std::complex<double>> obs_c(nb);
  for (std::size_t k = 0; k < nb; ++k) {
    obs_p[k] = psd_i.values[k].real() / shot;
    obs_s[k] = psd_s.values[k].real() / shot;
    obs_c[k] = csd.values[k] / shot;
  }

  // Chi-square weights from median-smoothed levels: Welch PSD variance is
  // level^2 / (segment count); a CSD bin's variance is bounded by the product
  // of the channel levels over twice the count (independent re/im parts).
  const std::vector<double> sm_p = est::running_median(obs_p, 9);
  const std::vector<double> sm_s = est::running_median(obs_s, 9);
  std::vector<double> var_p(nb), var_c(nb);
  for (std::size_t k = 0; k < nb; ++k) {
    var_p[k] = sm_p[k] * sm_p[k] / static_cast<double>(nseg);
    var_c[k] = sm_s[k] * sm_p[k] / (2.0 * static_cast<double>(nseg));
  }

  fit::FitProblem prob;
  prob.spin = need_spin(c, "fit");
  prob.epr = need_epr(c, "fit");
  prob.det = need_det(c, "fit");
  prob.det.theta_s = rec.theta_s;  // the record knows its homodyne angle
  prob.band_lo_hz = fcfg.band_lo_hz;
  prob.band_hi_hz = fcfg.band_hi_hz;
  prob.free_params = fcfg.free_params;

  fit::ObservedSeries op;
  op.data = SpectrumSeries(psd_i.grid, obs_p, Normalization::kShotNoise,
                           SeriesKind::kPsd);
  op.variance = var_p;
  op.target = fit::FitTarget::kIdlerPsd;
  prob.observed.push_back(std::move(op));

  fit::ObservedSeries oc;
  oc.data = SpectrumSeries(csd.grid, std::move(obs_c), Normalization::kShotNoise,
                           SeriesKind::kCsd);
  oc.variance = var_c;
  oc.target = fit::FitTarget::kCrossCsd;
  prob.observed.push_back(std::move(oc));

  fit::FitOptions fopt;
  fopt.seed = inv.seed.value_or(fcfg.seed);
  fopt.restarts = fcfg.restarts;
  fopt.jitter = fcfg.jitter;
  fopt.max_evaluations = fcfg.max_evaluations;
  fopt.tie_n_bb_to_n_th = fcfg.tie_n_bb_to_n_th;

  const fit::FitResult result = fit::fit_model(prob, fopt);

  ensure_out_dir(inv.out_dir);
  ordered_json j;
  j["estimates"] = ordered_json::object();
  j["uncertainties"] = ordered_json::object();
  for (const auto& [name, value] : result.estimates) {
    const HumanUnit& u = human_unit(name);
    j["estimates"][u.external] = value * u.scale;
    const double sigma = result.per_param_uncertainty.at(name);
    j["uncertainties"][u.external] = finite_or_null(sigma * u.scale);
  }
  j["chi2"] = result.chi2;
  j["dof"] = result.dof;
  j["chi2_per_dof"] =
      result.dof > 0 ? ordered_json(result.chi2 / static_cast<double>(result.dof))
                     : ordered_json(nullptr);
  j["converged"] = result.converged;
  j["evaluations"] = result.evaluations;
  j["band_hz"] = {fcfg.band_lo_hz, fcfg.band_hi_hz};
  j["theta_s_deg"] = rad_to_deg(rec.theta_s);
  j["input"] = {{"path", inv.data.front()},
                {"digest", io::file_digest_hex(inv.data.front())}};
  io::write_text_atomic(inv.out_dir + "/fit.json", j.dump(2) + "\n");

  Manifest manifest("fit", inv.out_dir);
  manifest.set_config(inv.config_path);
  manifest.set_seed(fopt.seed);
  manifest.add_input(inv.data.front());
  manifest.add_file("fit.json");
  manifest.write();

  std::cout << "fit " << (result.converged ? "converged" : "did NOT converge")
            << ": chi2/dof = " << result.chi2 << "/" << result.dof << " after "
            << result.evaluations << " evaluations\n";
  for (const auto& [name, value] : result.estimates) {
    const HumanUnit& u = human_unit(name);
    std::cout << "  " << u.external << " = " << format_double(value * u.scale)
              << "\n";
  }
  std::cout << "wrote " << inv.out_dir << "/fit.json\n";
  return result.converged ? 0 : 4;
}

// ---------------------------------------------------------------------------
// cavity-equiv
// ---------------------------------------------------------------------------

int cmd_cavity_equiv(const Invocation& inv) {
  const cfg::RunConfig c = load_config(inv);
  if (!c.cavity)
    throw ValidationError("config section \"cavity\" is required for cavity-equiv");

  const SpectrumSeries trajectory = io::read_spectrum_csv(
      inv.data.front(), SeriesKind::kAngle, Normalization::kAbsolute);
  const auto [cavity, result] =
      fit::fit_cavity_equivalent(trajectory, c.cavity->finesse);

  ensure_out_dir(inv.out_dir);
  ordered_json j;
  j["detuning_hz"] = rad_to_hz(cavity.detuning);
  j["bandwidth_hz"] = rad_to_hz(cavity.bandwidth);
  j["finesse"] = cavity.finesse;
  j["equivalent_length_m"] = model::equivalent_length(cavity);
  j["uncertainties"] = {
      {"detuning_hz", finite_or_null(result.per_param_uncertainty.at("detuning") / kTwoPi)},
      {"bandwidth_hz", finite_or_null(result.per_param_uncertainty.at("bandwidth") / kTwoPi)}};
  j["chi2"] = result.chi2;
  j["dof"] = result.dof;
  j["converged"] = result.converged;
  j["evaluations"] = result.evaluations;
  j["input"] = {{"path", inv.data.front()},
                {"digest", io::file_digest_hex(inv.data.front())}};
  io::write_text_atomic(inv.out_dir + "/cavity.json", j.dump(2) + "\n");

  Manifest manifest("cavity-equiv", inv.out_dir);
  manifest.set_config(inv.config_path);
  manifest.add_input(inv.data.front());
  manifest.add_file("cavity.json");
  manifest.write();

  std::cout << "equivalent cavity: detuning " << format_double(rad_to_hz(cavity.detuning))
            << " Hz, bandwidth " << format_double(rad_to_hz(cavity.bandwidth))
            << " Hz, length " << format_double(model::equivalent_length(cavity))
            << " m\n";
  std::cout << "wrote " << inv.out_dir << "/cavity.json\n";
  return result.converged ? 0 : 4;
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

int cmd_predict(const Invocation& inv) {
  const cfg::RunConfig c = load_config(inv);
  const cfg::PredictSection pcfg = c.predict.value_or(cfg::PredictSection{});
  const SpinParams& spin = need_spin(c, "predict");
  const EprParams& epr = need_epr(c, "predict");
  const DetectionConfig& det = need_det(c, "predict");
  const FrequencyGrid grid =
      FrequencyGrid::linspace_hz(pcfg.grid_lo_hz, pcfg.grid_hi_hz, pcfg.grid_points);

  ensure_out_dir(inv.out_dir);
  Manifest manifest("predict", inv.out_dir);
  manifest.set_config(inv.config_path);

  std::vector<double> thetas = pcfg.theta_s;
  if (thetas.empty()) thetas.push_back(det.theta_s);
  for (double theta : thetas) {
    DetectionConfig d = det;
    d.theta_s = wrap_angle(theta);
    const SpectrumSeries cond = model::conditional_spectrum(spin, epr, d, grid);
    emit_series(inv.out_dir, "conditional_theta" + theta_label(d.theta_s), cond,
                inv.format, manifest);
  }

  const SpectrumSeries optimal =
      model::conditional_spectrum_optimal_angle(spin, epr, det, grid);
  emit_series(inv.out_dir, "conditional_optimal", optimal, inv.format, manifest);
  const SpectrumSeries angle = model::squeezing_angle(spin, det, grid);
  emit_series(inv.out_dir, "squeezing_angle", angle, inv.format, manifest);

  ordered_json summary;
  try {
    summary["sql_bandwidth_hz"] = rad_to_hz(model::sql_bandwidth(spin, det));
  } catch (const DomainError&) {
    summary["sql_bandwidth_hz"] = nullptr;
  }
  try {
    const model::EffectiveParams eff = model::vr_effective_params(spin, det);
    summary["effective_larmor_hz"] = rad_to_hz(eff.larmor);
    summary["effective_readout_hz"] = rad_to_hz(eff.readout);
  } catch (const DomainError&) {
    summary["effective_larmor_hz"] = nullptr;
    summary["effective_readout_hz"] = nullptr;
  }
  try {
    summary["cooperativity"] = model::cooperativity(spin);
  } catch (const Error&) {
    summary["cooperativity"] = nullptr;
  }
  const double duan = model::duan_simon_level(epr);
  summary["duan_simon_level"] = duan;
  summary["entangled"] = duan < 1.0;

  // Floor of the optimal-angle conditional curve, in dB relative to vacuum.
  std::size_t kmin = 0;
  for (std::size_t k = 1; k < optimal.size(); ++k)
    if (optimal.values[k].real() < optimal.values[kmin].real()) kmin = k;
  summary["conditional_optimal_min_db"] =
      10.0 * std::log10(optimal.values[kmin].real());
  summary["conditional_optimal_min_freq_hz"] = optimal.grid.value_hz(kmin);

  if (pcfg.improve) {
    const SpectrumSeries improved =
        fit::project_improvement(spin, epr, det, grid, *pcfg.improve);
    emit_series(inv.out_dir, "projection_baseline", optimal, inv.format, manifest);
    emit_series(inv.out_dir, "projection_improved", improved, inv.format, manifest);
    std::size_t jmin = 0;
    for (std::size_t k = 1; k < improved.size(); ++k)
      if (improved.values[k].real() < improved.values[jmin].real()) jmin = k;
    summary["improvement"] = {
        {"n_th_divisor", pcfg.improve->n_th_divisor},
        {"bb_readout_divisor", pcfg.improve->bb_readout_divisor},
        {"floor_min_db", 10.0 * std::log10(improved.values[jmin].real())},
        {"floor_min_freq_hz", improved.grid.value_hz(jmin)}};
  }

  io::write_text_atomic(inv.out_dir + "/summary.json", summary.dump(2) + "\n");
  manifest.add_file("summary.json");
  manifest.write();
  std::cout << "wrote model predictions to " << inv.out_dir << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

int cmd_report(const Invocation& inv) {
  const std::string manifest_path = inv.out_dir + "/manifest.json";
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in)
    throw DataError("no manifest at \"" + manifest_path +
                    "\" — run a subcommand with --out " + inv.out_dir + " first");
  ordered_json manifest;
  try {
    manifest = ordered_json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("manifest \"" + manifest_path + "\" is not valid JSON: " +
                    std::string(e.what()));
  }

  auto show = [&](const char* key) {
    if (manifest.contains(key)) std::cout << key << ": " << manifest[key].dump() << "\n";
  };
  std::cout << "run report for " << inv.out_dir << "\n";
  show("tool");
  show("version");
  show("command");
  show("created_utc");
  show("seed");
  show("config_digest");
  show("synthesis_digest");
  if (manifest.contains("inputs"))
    for (const auto& e : manifest["inputs"])
      std::cout << "input: " << e.value("path", std::string("?")) << " digest="
                << e.value("digest", std::string("?")) << "\n";
  if (manifest.contains("files"))
    for (const auto& e : manifest["files"])
      std::cout << "file: " << e.value("name", std::string("?")) << " digest="
                << e.value("digest", std::string("?")) << "\n";

  for (const char* name : {"summary.json", "fit.json", "cavity.json"}) {
    const std::string p = inv.out_dir + "/" + name;
    std::ifstream f(p, std::ios::binary);
    if (!f) continue;
    std::ostringstream ss;
    ss << f.rdbuf();
    std::cout << "---- " << name << " ----\n" << ss.str();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Entangled-light spin-oscillator toolkit: synthesize two-channel "
      "records, estimate conditional spectra, fit model parameters, and "
      "evaluate closed-form predictions.\n"
      "Config files are strict JSON (schema_version 1, human units: Hz, "
      "degrees, seconds). SQZ_WORKERS caps synthesis threads (default: all "
      "cores); results never depend on it."};
  app.require_subcommand(1);

  Invocation inv;
  std::uint64_t seed_flag = 0;

  auto add_common = [&](CLI::App* sub, bool need_config) {
    auto* copt = sub->add_option("--config", inv.config_path,
                                 "JSON run configuration file");
    if (need_config) copt->required();
    sub->add_option("--out", inv.out_dir, "output directory (default: out)");
    sub->add_option("--format", inv.format, "spectrum file format: csv or json")
        ->check(CLI::IsMember({"csv", "json"}));
    sub->add_option("--seed", seed_flag,
                    "override simulate.seed / fit.seed from the config");
  };

  CLI::App* sim = app.add_subcommand(
      "simulate", "synthesize seeded signal/idler records (always CSV)");
  add_common(sim, true);

  CLI::App* ana = app.add_subcommand(
      "analyze", "Welch spectra, conditioning, and angle sweep from records");
  add_common(ana, true);
  ana->add_option("--data", inv.data, "record CSV file(s)")
      ->required()
      ->expected(-1);

  CLI::App* fitc = app.add_subcommand(
      "fit", "estimate model parameters from one record");
  add_common(fitc, true);
  fitc->add_option("--data", inv.data, "record CSV file")->required()->expected(1);

  CLI::App* cav = app.add_subcommand(
      "cavity-equiv", "match a filter cavity to an angle trajectory file");
  add_common(cav, true);
  cav->add_option("--data", inv.data, "trajectory CSV file")->required()->expected(1);

  CLI::App* pre = app.add_subcommand(
      "predict", "evaluate closed-form model spectra and summary numbers");
  add_common(pre, true);

  CLI::App* rep = app.add_subcommand("report", "print a digest of an output directory");
  rep->add_option("--out", inv.out_dir, "output directory to summarize");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // config/usage errors map to exit 2
  }

  for (CLI::App* sub : {sim, ana, fitc, cav, pre})
    if (sub->parsed() && sub->count("--seed") > 0) inv.seed = seed_flag;

  try {
    if (sim->parsed()) return cmd_simulate(inv);
    if (ana->parsed()) return cmd_analyze(inv);
    if (fitc->parsed()) return cmd_fit(inv);
    if (cav->parsed()) return cmd_cavity_equiv(inv);
    if (pre->parsed()) return cmd_predict(inv);
    if (rep->parsed()) return cmd_report(inv);
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what();
    if (e.line() > 0) std::cerr << " (line " << e.line() << ")";
    std::cerr << "\n";
    return 3;
  } catch (const GridMismatchError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    // Validation, fit setup, domain, and singular-evaluation problems are all
    // configuration-class failures.
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
