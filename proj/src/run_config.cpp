#include "sqz/run_config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace sqz::cfg {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) { throw ValidationError(msg); }

std::string joined(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

// Every object is checked against an explicit allow-list so typos surface as
// errors instead of silently falling back to defaults.
void reject_unknown(const json& obj, const std::string& path,
                    const std::set<std::string>& allowed) {
  for (const auto& item : obj.items())
    if (!allowed.count(item.key()))
      fail("unknown config key \"" + joined(path, item.key()) + "\"");
}

const json& need_object(const json& obj, const std::string& path) {
  if (!obj.is_object()) fail("config key \"" + path + "\" must be an object");
  return obj;
}

double as_number(const json& v, const std::string& path) {
  if (!v.is_number()) fail("config key \"" + path + "\" must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) fail("config key \"" + path + "\" must be finite");
  return d;
}

double need_number(const json& obj, const std::string& path, const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end())
    fail("missing required config key \"" + joined(path, key) + "\"");
  return as_number(*it, joined(path, key));
}

double opt_number(const json& obj, const std::string& path, const char* key,
                  double dflt) {
  const auto it = obj.find(key);
  return it == obj.end() ? dflt : as_number(*it, joined(path, key));
}

bool opt_bool(const json& obj, const std::string& path, const char* key, bool dflt) {
  const auto it = obj.find(key);
  if (it == obj.end()) return dflt;
  if (!it->is_boolean())
    fail("config key \"" + joined(path, key) + "\" must be true or false");
  return it->get<bool>();
}

std::uint64_t opt_u64(const json& obj, const std::string& path, const char* key,
                      std::uint64_t dflt) {
  const auto it = obj.find(key);
  if (it == obj.end()) return dflt;
  if (!it->is_number_integer() && !it->is_number_unsigned())
    fail("config key \"" + joined(path, key) +
         "\" must be a non-negative integer");
  if (it->is_number_integer() && it->get<std::int64_t>() < 0)
    fail("config key \"" + joined(path, key) +
         "\" must be a non-negative integer");
  return it->get<std::uint64_t>();
}

std::size_t opt_size(const json& obj, const std::string& path, const char* key,
                     std::size_t dflt) {
  return static_cast<std::size_t>(opt_u64(obj, path, key, dflt));
}

std::vector<double> opt_number_array(const json& obj, const std::string& path,
                                     const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end()) return {};
  if (!it->is_array())
    fail("config key \"" + joined(path, key) + "\" must be an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < it->size(); ++i)
    out.push_back(as_number((*it)[i],
                            joined(path, key) + "[" + std::to_string(i) + "]"));
  return out;
}

SpinParams parse_spin(const json& obj) {
  const std::string path = "spin";
  need_object(obj, path);
  reject_unknown(obj, path, {"larmor_hz", "readout_hz", "decay_hz",
                             "bb_readout_hz", "bb_decay_hz", "n_th", "n_bb"});
  // Sequenced locals: required keys are reported in declaration order
  // (argument evaluation order would be unspecified).
  const double larmor = need_number(obj, path, "larmor_hz");
  const double readout = need_number(obj, path, "readout_hz");
  const double decay = need_number(obj, path, "decay_hz");
  const SpinParams spin =
      SpinParams::from_hz(larmor, readout, decay,
                          opt_number(obj, path, "bb_readout_hz", 0.0),
                          opt_number(obj, path, "bb_decay_hz", 0.0),
                          opt_number(obj, path, "n_th", 0.0),
                          opt_number(obj, path, "n_bb", -1.0));
  try {
    spin.validate();
  } catch (const ValidationError& e) {
    fail("config section \"spin\": " + std::string(e.what()));
  }
  return spin;
}

EprParams parse_epr(const json& obj) {
  const std::string path = "epr";
  need_object(obj, path);
  reject_unknown(obj, path, {"r", "eta_s", "eta_i_in", "eta_i_out"});
  EprParams epr;
  epr.r = need_number(obj, path, "r");
  epr.eta_s = opt_number(obj, path, "eta_s", 1.0);
  epr.eta_i_in = opt_number(obj, path, "eta_i_in", 1.0);
  epr.eta_i_out = opt_number(obj, path, "eta_i_out", 1.0);
  try {
    epr.validate();
  } catch (const ValidationError& e) {
    fail("config section \"epr\": " + std::string(e.what()));
  }
  return epr;
}

DetectionConfig parse_detection(const json& obj) {
  const std::string path = "detection";
  need_object(obj, path);
  reject_unknown(obj, path, {"theta_s_deg", "delta_theta_i_deg"});
  const DetectionConfig det =
      DetectionConfig::from_deg(opt_number(obj, path, "theta_s_deg", 0.0),
                                opt_number(obj, path, "delta_theta_i_deg", 0.0));
  try {
    det.validate();
  } catch (const ValidationError& e) {
    fail("config section \"detection\": " + std::string(e.what()));
  }
  return det;
}

SimulateSection parse_simulate(const json& obj) {
  const std::string path = "simulate";
  need_object(obj, path);
  reject_unknown(obj, path, {"sample_rate_hz", "duration_s", "seed", "theta_s_deg"});
  SimulateSection s;
  s.sample_rate_hz = need_number(obj, path, "sample_rate_hz");
  s.duration_s = need_number(obj, path, "duration_s");
  s.seed = opt_u64(obj, path, "seed", 1);
  if (!(s.sample_rate_hz > 0.0))
    fail("config key \"simulate.sample_rate_hz\" must be > 0");
  if (!(s.duration_s > 0.0))
    fail("config key \"simulate.duration_s\" must be > 0");
  for (double deg : opt_number_array(obj, path, "theta_s_deg"))
    s.theta_s.push_back(deg_to_rad(deg));
  return s;
}

est::WelchConfig parse_welch(const json& obj) {
  const std::string path = "welch";
  need_object(obj, path);
  reject_unknown(obj, path, {"segment_length", "overlap", "window", "detrend"});
  est::WelchConfig w;
  w.segment_length = opt_size(obj, path, "segment_length", w.segment_length);
  w.overlap = opt_number(obj, path, "overlap", w.overlap);
  w.detrend = opt_bool(obj, path, "detrend", w.detrend);
  const auto it = obj.find("window");
  if (it != obj.end()) {
    if (!it->is_string())
      fail("config key \"welch.window\" must be \"hann\" or \"rect\"");
    const std::string name = it->get<std::string>();
    if (name == "hann")
      w.window = est::Window::kHann;
    else if (name == "rect")
      w.window = est::Window::kRect;
    else
      fail("config key \"welch.window\" must be \"hann\" or \"rect\", got \"" +
           name + "\"");
  }
  try {
    w.validate();
  } catch (const Error& e) {
    fail("config section \"welch\": " + std::string(e.what()));
  }
  return w;
}

AnalyzeSection parse_analyze(const json& obj) {
  const std::string path = "analyze";
  need_object(obj, path);
  reject_unknown(obj, path, {"guard_fraction", "band_lo_hz", "band_hi_hz",
                             "zero_gain", "unbiased", "smooth_gain"});
  AnalyzeSection a;
  a.guard_fraction = opt_number(obj, path, "guard_fraction", a.guard_fraction);
  a.band_lo_hz = opt_number(obj, path, "band_lo_hz", a.band_lo_hz);
  a.band_hi_hz = opt_number(obj, path, "band_hi_hz", a.band_hi_hz);
  a.zero_gain = opt_bool(obj, path, "zero_gain", a.zero_gain);
  a.unbiased = opt_bool(obj, path, "unbiased", a.unbiased);
  a.smooth_gain = opt_bool(obj, path, "smooth_gain", a.smooth_gain);
  if (!(a.guard_fraction >= 0.0) || a.guard_fraction >= 1.0)
    fail("config key \"analyze.guard_fraction\" must be in [0, 1)");
  if (!(a.band_lo_hz >= 0.0) || !(a.band_lo_hz < a.band_hi_hz))
    fail("config keys \"analyze.band_lo_hz\"/\"analyze.band_hi_hz\" must satisfy"
         " 0 <= lo < hi");
  return a;
}

// Fit bounds arrive in human units. The fitter itself works in Hz for rates
// and radians for angles, so frequency bounds pass through unchanged and only
// angle bounds are converted. This table is the authority for that boundary.
enum class BoundUnit { kHz, kDeg, kRaw };

BoundUnit bound_unit(const std::string& name, const std::string& path) {
  static const std::set<std::string> hz = {"larmor", "readout", "decay",
                                           "bb_readout", "bb_decay"};
  static const std::set<std::string> deg = {"theta_s", "delta_theta_i"};
  static const std::set<std::string> raw = {"n_th", "n_bb", "r", "eta_s",
                                            "eta_i_in", "eta_i_out"};
  if (hz.count(name)) return BoundUnit::kHz;
  if (deg.count(name)) return BoundUnit::kDeg;
  if (raw.count(name)) return BoundUnit::kRaw;
  fail("config key \"" + path + "\" names no fit parameter: \"" + name + "\"");
}

FitSection parse_fit(const json& obj) {
  const std::string path = "fit";
  need_object(obj, path);
  reject_unknown(obj, path, {"free", "band_lo_hz", "band_hi_hz", "seed",
                             "restarts", "max_evaluations", "jitter",
                             "tie_n_bb_to_n_th"});
  FitSection f;
  f.band_lo_hz = opt_number(obj, path, "band_lo_hz", f.band_lo_hz);
  f.band_hi_hz = opt_number(obj, path, "band_hi_hz", f.band_hi_hz);
  f.seed = opt_u64(obj, path, "seed", f.seed);
  f.restarts = opt_size(obj, path, "restarts", f.restarts);
  f.max_evaluations = opt_size(obj, path, "max_evaluations", f.max_evaluations);
  f.jitter = opt_number(obj, path, "jitter", f.jitter);
  f.tie_n_bb_to_n_th = opt_bool(obj, path, "tie_n_bb_to_n_th", f.tie_n_bb_to_n_th);

  const auto it = obj.find("free");
  if (it != obj.end()) {
    if (!it->is_array()) fail("config key \"fit.free\" must be an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const std::string epath = "fit.free[" + std::to_string(i) + "]";
      const json& e = need_object((*it)[i], epath);
      reject_unknown(e, epath, {"name", "lo", "hi"});
      const auto nit = e.find("name");
      if (nit == e.end() || !nit->is_string())
        fail("config key \"" + epath + ".name\" must be a string");
      fit::ParamBound b;
      b.name = nit->get<std::string>();
      b.lo = need_number(e, epath, "lo");
      b.hi = need_number(e, epath, "hi");
      switch (bound_unit(b.name, epath + ".name")) {
        case BoundUnit::kHz:
        case BoundUnit::kRaw:
          break;  // the fitter's frequency axis is already Hz
        case BoundUnit::kDeg:
          b.lo = deg_to_rad(b.lo);
          b.hi = deg_to_rad(b.hi);
          break;
      }
      f.free_params.push_back(std::move(b));
    }
  }
  return f;
}

CavitySection parse_cavity(const json& obj) {
  const std::string path = "cavity";
  need_object(obj, path);
  reject_unknown(obj, path, {"finesse"});
  CavitySection c;
  c.finesse = need_number(obj, path, "finesse");
  if (!(c.finesse > 0.0)) fail("config key \"cavity.finesse\" must be > 0");
  return c;
}

PredictSection parse_predict(const json& obj) {
  const std::string path = "predict";
  need_object(obj, path);
  reject_unknown(obj, path, {"grid_lo_hz", "grid_hi_hz", "grid_points",
                             "theta_s_deg", "improve"});
  PredictSection p;
  p.grid_lo_hz = opt_number(obj, path, "grid_lo_hz", p.grid_lo_hz);
  p.grid_hi_hz = opt_number(obj, path, "grid_hi_hz", p.grid_hi_hz);
  p.grid_points = opt_size(obj, path, "grid_points", p.grid_points);
  if (!(p.grid_lo_hz > 0.0) || !(p.grid_lo_hz < p.grid_hi_hz))
    fail("config keys \"predict.grid_lo_hz\"/\"predict.grid_hi_hz\" must satisfy"
         " 0 < lo < hi");
  if (p.grid_points < 2) fail("config key \"predict.grid_points\" must be >= 2");
  for (double deg : opt_number_array(obj, path, "theta_s_deg"))
    p.theta_s.push_back(deg_to_rad(deg));
  const auto it = obj.find("improve");
  if (it != obj.end()) {
    const std::string ipath = "predict.improve";
    need_object(*it, ipath);
    reject_unknown(*it, ipath, {"n_th_divisor", "bb_readout_divisor"});
    fit::ImprovementScenario sc;
    sc.n_th_divisor = opt_number(*it, ipath, "n_th_divisor", 1.0);
    sc.bb_readout_divisor = opt_number(*it, ipath, "bb_readout_divisor", 1.0);
    if (!(sc.n_th_divisor >= 1.0) || !(sc.bb_readout_divisor >= 1.0))
      fail("config keys under \"predict.improve\" must be divisors >= 1");
    p.improve = sc;
  }
  return p;
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    fail("config is not valid JSON: " + std::string(e.what()));
  }
  if (!root.is_object()) fail("config root must be a JSON object");
  reject_unknown(root, "", {"schema_version", "spin", "epr", "detection",
                            "simulate", "welch", "analyze", "fit", "cavity",
                            "predict"});
  const auto sv = root.find("schema_version");
  if (sv == root.end())
    fail("missing required config key \"schema_version\"");
  if (!sv->is_number_integer() && !sv->is_number_unsigned())
    fail("config key \"schema_version\" must be an integer");
  RunConfig cfg;
  cfg.schema_version = sv->get<int>();
  if (cfg.schema_version != 1)
    fail("unsupported config schema_version " +
         std::to_string(cfg.schema_version) + " (this tool reads version 1)");

  if (auto it = root.find("spin"); it != root.end()) cfg.spin = parse_spin(*it);
  if (auto it = root.find("epr"); it != root.end()) cfg.epr = parse_epr(*it);
  if (auto it = root.find("detection"); it != root.end())
    cfg.detection = parse_detection(*it);
  if (auto it = root.find("simulate"); it != root.end())
    cfg.simulate = parse_simulate(*it);
  if (auto it = root.find("welch"); it != root.end()) cfg.welch = parse_welch(*it);
  if (auto it = root.find("analyze"); it != root.end())
    cfg.analyze = parse_analyze(*it);
  if (auto it = root.find("fit"); it != root.end()) cfg.fit = parse_fit(*it);
  if (auto it = root.find("cavity"); it != root.end())
    cfg.cavity = parse_cavity(*it);
  if (auto it = root.find("predict"); it != root.end())
    cfg.predict = parse_predict(*it);
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open config file \"" + path + "\"");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (!in.good() && !in.eof())
    throw DataError("cannot read config file \"" + path + "\"");
  return parse_run_config(ss.str());
}

}  // namespace sqz::cfg
