#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sqz {

inline constexpr double kPi = 3.141592653589793238462643383279502884;
inline constexpr double kTwoPi = 2.0 * kPi;

// Symmetrized vacuum (shot-noise) spectral density; the reference for the
// "shot-noise units" normalization tag.
inline constexpr double kShotNoiseUnit = 0.5;

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s

// All internal frequencies are angular (rad/s); user-facing I/O is in Hz and
// degrees, converted exactly once at the boundary with these helpers.
inline double hz_to_rad(double f) { return kTwoPi * f; }
inline double rad_to_hz(double w) { return w / kTwoPi; }
inline double deg_to_rad(double d) { return d * (kPi / 180.0); }
inline double rad_to_deg(double r) { return r * (180.0 / kPi); }

// Fold an angle into (-pi, pi].
inline double wrap_angle(double a) {
  a = std::fmod(a, kTwoPi);
  if (a <= -kPi) a += kTwoPi;
  if (a > kPi) a -= kTwoPi;
  return a;
}

// ---------------------------------------------------------------------------
// Error taxonomy
// ---------------------------------------------------------------------------

// Base class for every error thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid parameter or configuration values.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A response function hit an exact pole (zero damping at resonance) or a
// division by zero at a specific frequency bin.
class SingularEvaluationError : public Error {
 public:
  SingularEvaluationError(const std::string& what, std::size_t bin, double omega)
      : Error(what), bin_(bin), omega_(omega) {}
  std::size_t bin() const { return bin_; }
  double omega() const { return omega_; }

 private:
  std::size_t bin_;
  double omega_;
};

// A closed-form expression was evaluated outside its real domain; carries the
// offending radicand so callers can report how far outside.
class DomainError : public Error {
 public:
  DomainError(const std::string& what, double radicand)
      : Error(what), radicand_(radicand) {}
  double radicand() const { return radicand_; }

 private:
  double radicand_;
};

// Malformed external data (CSV parse failures, short records, ...); carries a
// 1-based line number when one applies (0 = not line-specific).
class DataError : public Error {
 public:
  explicit DataError(const std::string& what, std::size_t line = 0)
      : Error(what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Two series/grids that must share a frequency axis do not.
class GridMismatchError : public Error {
 public:
  using Error::Error;
};

// A fit cannot be posed (degenerate data, empty band, bad bounds).
class FitSetupError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Parameter records
// ---------------------------------------------------------------------------

// Spin-oscillator parameters. All rates in rad/s; the sign of `larmor`
// selects the effective-mass sign (negative Larmor = negative mass).
struct SpinParams {
  double larmor = 0.0;      // Omega_a, signed [rad/s]
  double readout = 0.0;     // Gamma_a >= 0 [rad/s]
  double decay = 0.0;       // gamma_a >= 0 [rad/s]
  double bb_readout = 0.0;  // Gamma_bb >= 0 [rad/s]
  double bb_decay = 0.0;    // gamma_bb >= 0 [rad/s]
  double n_th = 0.0;        // thermal occupation of the narrowband mode
  double n_bb = 0.0;        // thermal occupation of the broadband mode

  // Builds from Hz inputs. n_bb < 0 means "default to n_th", the documented
  // convention for the broadband occupation.
  static SpinParams from_hz(double larmor_hz, double readout_hz, double decay_hz,
                            double bb_readout_hz = 0.0, double bb_decay_hz = 0.0,
                            double n_th = 0.0, double n_bb = -1.0) {
    SpinParams p;
    p.larmor = hz_to_rad(larmor_hz);
    p.readout = hz_to_rad(readout_hz);
    p.decay = hz_to_rad(decay_hz);
    p.bb_readout = hz_to_rad(bb_readout_hz);
    p.bb_decay = hz_to_rad(bb_decay_hz);
    p.n_th = n_th;
    p.n_bb = (n_bb < 0.0) ? n_th : n_bb;
    return p;
  }

  void validate() const {
    auto bad = [](double v) { return !std::isfinite(v) || v < 0.0; };
    if (!std::isfinite(larmor)) throw ValidationError("spin.larmor must be finite");
    if (bad(readout)) throw ValidationError("spin.readout must be finite and >= 0");
    if (bad(decay)) throw ValidationError("spin.decay must be finite and >= 0");
    if (bad(bb_readout)) throw ValidationError("spin.bb_readout must be finite and >= 0");
    if (bad(bb_decay)) throw ValidationError("spin.bb_decay must be finite and >= 0");
    if (bad(n_th)) throw ValidationError("spin.n_th must be finite and >= 0");
    if (bad(n_bb)) throw ValidationError("spin.n_bb must be finite and >= 0");
    if (bb_decay > 0.0 && decay > 0.0 && bb_decay < decay)
      throw ValidationError("spin.bb_decay must be >= spin.decay (broadband mode decays faster)");
  }
};

// Two-mode squeezing strength and the three channel efficiencies.
struct EprParams {
  double r = 0.0;        // squeezing factor >= 0
  double eta_s = 1.0;    // signal path efficiency, (0, 1]
  double eta_i_in = 1.0;   // idler input coupling efficiency, (0, 1]
  double eta_i_out = 1.0;  // idler output/detection efficiency, (0, 1]

  void validate() const {
    if (!std::isfinite(r) || r < 0.0) throw ValidationError("epr.r must be finite and >= 0");
    auto check = [](double e, const char* name) {
      if (!std::isfinite(e) || e <= 0.0 || e > 1.0)
        throw ValidationError(std::string(name) + " must lie in (0, 1]");
    };
    check(eta_s, "epr.eta_s");
    check(eta_i_in, "epr.eta_i_in");
    check(eta_i_out, "epr.eta_i_out");
  }
};

// Homodyne angle of the signal arm and quarter-wave-plate offset of the
// idler arm, both in radians, stored folded into (-pi, pi].
struct DetectionConfig {
  double theta_s = 0.0;
  double delta_theta_i = 0.0;

  static DetectionConfig from_deg(double theta_s_deg, double delta_theta_i_deg) {
    DetectionConfig d;
    d.theta_s = wrap_angle(deg_to_rad(theta_s_deg));
    d.delta_theta_i = wrap_angle(deg_to_rad(delta_theta_i_deg));
    return d;
  }

  void validate() const {
    if (!std::isfinite(theta_s) || theta_s <= -kPi || theta_s > kPi)
      throw ValidationError("detection.theta_s must be finite and in (-pi, pi]");
    if (!std::isfinite(delta_theta_i) || delta_theta_i <= -kPi || delta_theta_i > kPi)
      throw ValidationError("detection.delta_theta_i must be finite and in (-pi, pi]");
  }
};

// Detuned filter cavity: detuning and half-linewidth in rad/s, plus finesse.
struct CavityParams {
  double detuning = 0.0;   // delta_f [rad/s]
  double bandwidth = 0.0;  // gamma_f > 0 [rad/s]
  double finesse = 0.0;    // > 0, dimensionless

  void validate() const {
    if (!std::isfinite(detuning)) throw ValidationError("cavity.detuning must be finite");
    if (!std::isfinite(bandwidth) || bandwidth <= 0.0)
      throw ValidationError("cavity.bandwidth must be finite and > 0");
    if (!std::isfinite(finesse) || finesse <= 0.0)
      throw ValidationError("cavity.finesse must be finite and > 0");
  }
};

// ---------------------------------------------------------------------------
// Frequency grid and spectrum containers
// ---------------------------------------------------------------------------

// Strictly increasing, strictly positive angular frequencies. DC is excluded
// by construction; every spectral quantity lives on one of these.
class FrequencyGrid {
 public:
  FrequencyGrid() = default;

  explicit FrequencyGrid(std::vector<double> omega) : omega_(std::move(omega)) {
    if (omega_.empty()) throw ValidationError("frequency grid must be non-empty");
    double prev = 0.0;
    for (std::size_t i = 0; i < omega_.size(); ++i) {
      if (!std::isfinite(omega_[i]) || omega_[i] <= prev)
        throw ValidationError("frequency grid must be strictly increasing and > 0 (bin " +
                              std::to_string(i) + ")");
      prev = omega_[i];
    }
  }

  // Uniformly spaced grid given in Hz, endpoints inclusive.
  static FrequencyGrid linspace_hz(double lo_hz, double hi_hz, std::size_t n) {
    if (n < 2) throw ValidationError("linspace grid needs at least 2 points");
    std::vector<double> w(n);
    const double lo = hz_to_rad(lo_hz), hi = hz_to_rad(hi_hz);
    for (std::size_t i = 0; i < n; ++i)
      w[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    return FrequencyGrid(std::move(w));
  }

  std::size_t size() const { return omega_.size(); }
  bool empty() const { return omega_.empty(); }
  double operator[](std::size_t i) const { return omega_[i]; }
  const std::vector<double>& values() const { return omega_; }
  double value_hz(std::size_t i) const { return rad_to_hz(omega_[i]); }

  bool same_as(const FrequencyGrid& other, double rel_tol = 0.0) const {
    if (omega_.size() != other.omega_.size()) return false;
    for (std::size_t i = 0; i < omega_.size(); ++i) {
      const double d = std::abs(omega_[i] - other.omega_[i]);
      if (d > rel_tol * std::abs(omega_[i])) return false;
    }
    return true;
  }

 private:
  std::vector<double> omega_;
};

enum class Normalization : std::uint8_t {
  kShotNoise,  // ratio to the vacuum level (vacuum PSD == 1)
  kAbsolute,   // symmetrized units (vacuum PSD == kShotNoiseUnit)
};

enum class SeriesKind : std::uint8_t {
  kPsd,    // real, >= 0
  kCsd,    // complex cross-spectral density
  kGain,   // complex transfer gain
  kAngle,  // real, radians
};

inline const char* to_string(Normalization n) {
  return n == Normalization::kShotNoise ? "shot-noise-units" : "absolute";
}
inline const char* to_string(SeriesKind k) {
  switch (k) {
    case SeriesKind::kPsd: return "psd";
    case SeriesKind::kCsd: return "csd";
    case SeriesKind::kGain: return "gain";
    default: return "angle";
  }
}

// A frequency grid plus per-bin values. Values are stored as complex; for the
// real-valued kinds (psd, angle) the imaginary parts are exactly zero.
struct SpectrumSeries {
  FrequencyGrid grid;
  std::vector<std::complex<double>> values;
  Normalization normalization = Normalization::kShotNoise;
  SeriesKind kind = SeriesKind::kPsd;

  SpectrumSeries() = default;
  SpectrumSeries(FrequencyGrid g, std::vector<std::complex<double>> v,
                 Normalization norm, SeriesKind k)
      : grid(std::move(g)), values(std::move(v)), normalization(norm), kind(k) {
    validate();
  }

  // Real-valued series constructor (psd / angle).
  SpectrumSeries(FrequencyGrid g, const std::vector<double>& v,
                 Normalization norm, SeriesKind k)
      : grid(std::move(g)), normalization(norm), kind(k) {
    values.reserve(v.size());
    for (double x : v) values.emplace_back(x, 0.0);
    validate();
  }

  std::size_t size() const { return values.size(); }
  bool is_real_kind() const {
    return kind == SeriesKind::kPsd || kind == SeriesKind::kAngle;
  }

  std::vector<double> real_values() const {
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i].real();
    return out;
  }

  void validate() const {
    if (values.size() != grid.size())
      throw ValidationError("spectrum values length must equal grid length");
    for (std::size_t i = 0; i < values.size(); ++i) {
      const auto& z = values[i];
      if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
        throw ValidationError("spectrum value not finite at bin " + std::to_string(i));
      if (is_real_kind() && z.imag() != 0.0)
        throw ValidationError("real-kind spectrum has nonzero imaginary part at bin " +
                              std::to_string(i));
      if (kind == SeriesKind::kPsd && z.real() < 0.0)
        throw ValidationError("PSD value negative at bin " + std::to_string(i));
    }
  }
};

}  // namespace sqz
