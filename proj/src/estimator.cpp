#include "sqz/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>

#include "sqz/fft.hpp"
#include "sqz/kernels.hpp"

namespace sqz::est {

namespace {

using cplx = std::complex<double>;

bool is_pow2(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

struct SegmentLayout {
  std::size_t nperseg = 0;
  std::size_t nb = 0;    // nperseg/2 + 1 spectral bins
  std::size_t step = 0;
  std::size_t nseg = 0;
  std::vector<double> window;
  double energy = 0.0;  // sum of squared window samples
};

SegmentLayout layout_for(const WelchConfig& cfg, std::size_t len) {
  cfg.validate();
  if (len < 2 * cfg.segment_length)
    throw DataError("record too short for Welch estimation: " + std::to_string(len) +
                    " samples, need >= " + std::to_string(2 * cfg.segment_length));
  SegmentLayout lay;
  lay.nperseg = cfg.segment_length;
  lay.nb = lay.nperseg / 2 + 1;
  lay.step = cfg.step();
  lay.nseg = (len - lay.nperseg) / lay.step + 1;
  lay.window.resize(lay.nperseg);
  for (std::size_t k = 0; k < lay.nperseg; ++k) {
    lay.window[k] = (cfg.window == Window::kHann)
                        ? 0.5 - 0.5 * std::cos(kTwoPi * static_cast<double>(k) /
                                               static_cast<double>(lay.nperseg))
                        : 1.0;
    lay.energy += lay.window[k] * lay.window[k];
  }
  return lay;
}

void load_segment(const std::vector<double>& x, std::size_t start,
                  const SegmentLayout& lay, bool detrend, std::vector<double>& seg) {
  seg.assign(x.begin() + static_cast<std::ptrdiff_t>(start),
             x.begin() + static_cast<std::ptrdiff_t>(start + lay.nperseg));
  if (detrend) {
    const double mean =
        std::accumulate(seg.begin(), seg.end(), 0.0) / static_cast<double>(lay.nperseg);
    for (auto& v : seg) v -= mean;
  }
  for (std::size_t k = 0; k < lay.nperseg; ++k) seg[k] *= lay.window[k];
}

// Positive-frequency slice (drop DC, keep Nyquist) with one-sided scaling.
template <typename T>
std::vector<T> one_sided(const std::vector<T>& acc, const SegmentLayout& lay,
                         double fs, std::size_t nseg) {
  const double scale = 1.0 / (static_cast<double>(nseg) * fs * lay.energy);
  std::vector<T> out(lay.nb - 1);
  for (std::size_t k = 1; k < lay.nb; ++k) {
    const double factor = (k + 1 < lay.nb) ? 2.0 * scale : scale;
    out[k - 1] = acc[k] * factor;
  }
  return out;
}

std::vector<double> half_of(const std::vector<double>& x) {
  return std::vector<double>(x.begin(),
                             x.begin() + static_cast<std::ptrdiff_t>(x.size() / 2));
}

double wrap_half_turn(double a) {
  a = std::fmod(a, kPi);
  if (a < 0.0) a += kPi;
  return a;
}

}  // namespace

void WelchConfig::validate() const {
  if (!is_pow2(segment_length) || segment_length < 64)
    throw ValidationError("welch.segment_length must be a power of two >= 64");
  if (!std::isfinite(overlap) || overlap < 0.0 || overlap >= 1.0)
    throw ValidationError("welch.overlap must lie in [0, 1)");
}

std::size_t WelchConfig::step() const {
  const auto hop = static_cast<long long>(
      std::llround(static_cast<double>(segment_length) * (1.0 - overlap)));
  return hop < 1 ? 1 : static_cast<std::size_t>(hop);
}

FrequencyGrid WelchConfig::grid(double sample_rate_hz) const {
  validate();
  if (!std::isfinite(sample_rate_hz) || sample_rate_hz <= 0.0)
    throw ValidationError("sample_rate must be finite and > 0");
  std::vector<double> w(segment_length / 2);
  for (std::size_t k = 1; k <= segment_length / 2; ++k)
    w[k - 1] = kTwoPi * static_cast<double>(k) * sample_rate_hz /
               static_cast<double>(segment_length);
  return FrequencyGrid(std::move(w));
}

std::vector<double> trim_guard(const std::vector<double>& x, double fraction) {
  if (!std::isfinite(fraction) || fraction < 0.0 || fraction >= 1.0)
    throw ValidationError("guard fraction must lie in [0, 1)");
  const auto cut = static_cast<std::size_t>(static_cast<double>(x.size()) * fraction / 2.0);
  if (x.size() < 2 * cut + 1)
    throw ValidationError("record too short for the requested guard fraction");
  return std::vector<double>(x.begin() + static_cast<std::ptrdiff_t>(cut),
                             x.end() - static_cast<std::ptrdiff_t>(cut));
}

SpectrumSeries welch_psd(const std::vector<double>& x, double sample_rate_hz,
                         const WelchConfig& cfg) {
  const SegmentLayout lay = layout_for(cfg, x.size());
  std::vector<double> seg;
  std::vector<cplx> spec(lay.nb);
  std::vector<double> acc(lay.nb, 0.0);
  for (std::size_t s = 0; s < lay.nseg; ++s) {
    load_segment(x, s * lay.step, lay, cfg.detrend, seg);
    fft::real_to_complex(seg.data(), spec.data(), lay.nperseg);
    kernels::abs2_accum(acc.data(), spec.data(), lay.nb);
  }
  return SpectrumSeries(cfg.grid(sample_rate_hz),
                        one_sided(acc, lay, sample_rate_hz, lay.nseg),
                        Normalization::kAbsolute, SeriesKind::kPsd);
}

SpectrumSeries welch_csd(const std::vector<double>& x, const std::vector<double>& y,
                         double sample_rate_hz, const WelchConfig& cfg) {
  if (x.size() != y.size())
    throw DataError("cross-spectral channels must have equal lengths");
  const SegmentLayout lay = layout_for(cfg, x.size());
  std::vector<double> seg;
  std::vector<cplx> spec_x(lay.nb), spec_y(lay.nb);
  std::vector<cplx> acc(lay.nb, cplx(0.0, 0.0));
  for (std::size_t s = 0; s < lay.nseg; ++s) {
    load_segment(x, s * lay.step, lay, cfg.detrend, seg);
    fft::real_to_complex(seg.data(), spec_x.data(), lay.nperseg);
    load_segment(y, s * lay.step, lay, cfg.detrend, seg);
    fft::real_to_complex(seg.data(), spec_y.data(), lay.nperseg);
    kernels::mix_accum_conj(acc.data(), spec_x.data(), spec_y.data(), lay.nb);
  }
  return SpectrumSeries(cfg.grid(sample_rate_hz),
                        one_sided(acc, lay, sample_rate_hz, lay.nseg),
                        Normalization::kAbsolute, SeriesKind::kCsd);
}

WienerFilterEstimate estimate_wiener(const synth::TimeSeriesPair& pair,
                                     const WelchConfig& cfg, const WienerOptions& opt) {
  pair.validate();
  if (!std::isfinite(opt.suppression_epsilon) || opt.suppression_epsilon < 0.0)
    throw ValidationError("suppression_epsilon must be finite and >= 0");

  const bool halved = opt.bias == WienerOptions::Bias::kUnbiased;
  std::vector<double> sig_half, idl_half;
  if (halved) {
    sig_half = half_of(pair.signal);
    idl_half = half_of(pair.idler);
  }
  const std::vector<double>& sig = halved ? sig_half : pair.signal;
  const std::vector<double>& idl = halved ? idl_half : pair.idler;

  const auto psd_i = welch_psd(idl, pair.sample_rate_hz, cfg);
  const auto csd = welch_csd(sig, idl, pair.sample_rate_hz, cfg);

  std::vector<double> sorted = psd_i.real_values();
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  const double median = sorted[sorted.size() / 2];
  if (median <= 0.0) throw DataError("idler record is spectrally degenerate");
  const double threshold = opt.suppression_epsilon * median;

  WienerFilterEstimate out;
  out.source = WienerFilterEstimate::Source::kDataDriven;
  std::vector<cplx> g(psd_i.size());
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double p = psd_i.values[k].real();
    if (p < threshold) {
      g[k] = cplx(0.0, 0.0);
      out.suppressed_bins.push_back(k);
    } else {
      g[k] = -csd.values[k] / p;
    }
  }

  if (opt.smooth_gain) {
    std::vector<cplx> smoothed(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) {
      cplx sum = g[k];
      double cnt = 1.0;
      if (k > 0) { sum += g[k - 1]; cnt += 1.0; }
      if (k + 1 < g.size()) { sum += g[k + 1]; cnt += 1.0; }
      smoothed[k] = sum / cnt;
    }
    g.swap(smoothed);
    for (std::size_t k : out.suppressed_bins) g[k] = cplx(0.0, 0.0);
  }

  out.gain = SpectrumSeries(csd.grid, std::move(g), Normalization::kAbsolute,
                            SeriesKind::kGain);
  return out;
}

WienerFilterEstimate filter_from_gain(SpectrumSeries gain) {
  if (gain.kind != SeriesKind::kGain)
    throw ValidationError("filter gain series must have kind 'gain'");
  WienerFilterEstimate out;
  out.gain = std::move(gain);
  out.source = WienerFilterEstimate::Source::kAnalytical;
  return out;
}

ConditioningResult apply_conditioning(const synth::TimeSeriesPair& pair,
                                      const WienerFilterEstimate& filter,
                                      const WelchConfig& cfg) {
  pair.validate();
  cfg.validate();
  const std::size_t nperseg = cfg.segment_length;
  const std::size_t nb = nperseg / 2 + 1;
  if (!filter.gain.grid.same_as(cfg.grid(pair.sample_rate_hz), 1e-9))
    throw GridMismatchError("filter gain grid does not match the Welch grid");

  // Impulse response: extend the positive-frequency gain with a copied DC
  // bin, inverse-transform, and center it (noncausal filter).
  std::vector<cplx> g_full(nb);
  g_full[0] = filter.gain.values.front();
  for (std::size_t k = 1; k < nb; ++k) g_full[k] = filter.gain.values[k - 1];
  std::vector<double> h_raw(nperseg);
  fft::complex_to_real(g_full.data(), h_raw.data(), nperseg);
  const double inv_n = 1.0 / static_cast<double>(nperseg);
  std::vector<double> h(nperseg);
  for (std::size_t i = 0; i < nperseg; ++i)
    h[i] = h_raw[(i + nperseg / 2) % nperseg] * inv_n;

  // Overlap-add linear convolution of the idler with h.
  const std::size_t len = pair.idler.size();
  const std::size_t fft_size = std::max<std::size_t>(4 * nperseg, 65536);
  const std::size_t chunk = fft_size - nperseg + 1;
  const std::size_t nbf = fft_size / 2 + 1;

  std::vector<double> padded(fft_size, 0.0);
  std::copy(h.begin(), h.end(), padded.begin());
  std::vector<cplx> h_spec(nbf);
  fft::real_to_complex(padded.data(), h_spec.data(), fft_size);

  std::vector<double> y(len + nperseg - 1, 0.0);
  std::vector<cplx> x_spec(nbf);
  std::vector<double> ybuf(fft_size);
  const double inv_m = 1.0 / static_cast<double>(fft_size);
  for (std::size_t start = 0; start < len; start += chunk) {
    const std::size_t count = std::min(chunk, len - start);
    std::fill(padded.begin(), padded.end(), 0.0);
    std::copy(pair.idler.begin() + static_cast<std::ptrdiff_t>(start),
              pair.idler.begin() + static_cast<std::ptrdiff_t>(start + count),
              padded.begin());
    fft::real_to_complex(padded.data(), x_spec.data(), fft_size);
    for (std::size_t k = 0; k < nbf; ++k) x_spec[k] *= h_spec[k];
    fft::complex_to_real(x_spec.data(), ybuf.data(), fft_size);
    const std::size_t tail = std::min(fft_size, y.size() - start);
    for (std::size_t i = 0; i < tail; ++i) y[start + i] += ybuf[i] * inv_m;
  }

  ConditioningResult out;
  out.conditioned.resize(len);
  const std::size_t delay = nperseg / 2;  // centering shift of h
  for (std::size_t i = 0; i < len; ++i)
    out.conditioned[i] = pair.signal[i] + y[delay + i];
  out.spectrum = welch_psd(out.conditioned, pair.sample_rate_hz, cfg);
  return out;
}

Spectrogram build_spectrogram(
    const std::vector<std::pair<double, SpectrumSeries>>& entries,
    double shot_reference) {
  if (entries.size() < 3)
    throw ValidationError("spectrogram needs at least 3 distinct homodyne angles");
  if (!std::isfinite(shot_reference) || shot_reference <= 0.0)
    throw ValidationError("shot reference must be finite and > 0");

  std::vector<std::size_t> order(entries.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return wrap_half_turn(entries[a].first) < wrap_half_turn(entries[b].first);
  });

  Spectrogram sg;
  sg.grid = entries.front().second.grid;
  for (std::size_t idx : order) {
    const auto& [theta, series] = entries[idx];
    const double wrapped = wrap_half_turn(theta);
    if (!sg.theta_s.empty() && std::abs(wrapped - sg.theta_s.back()) < 1e-12)
      throw ValidationError("duplicate homodyne angle in spectrogram input");
    if (series.kind != SeriesKind::kPsd)
      throw ValidationError("spectrogram entries must be PSD series");
    if (!series.grid.same_as(sg.grid, 1e-9))
      throw GridMismatchError("spectrogram entries must share one frequency grid");
    std::vector<double> row(series.size());
    for (std::size_t k = 0; k < series.size(); ++k) {
      const double v = series.values[k].real();
      if (v <= 0.0)
        throw ValidationError("non-positive spectral value at bin " + std::to_string(k));
      row[k] = 10.0 * std::log10(v / shot_reference);
    }
    sg.theta_s.push_back(wrapped);
    sg.values_db.push_back(std::move(row));
  }
  return sg;
}

SpectrumSeries extract_angle_trajectory(const Spectrogram& sg) {
  const std::size_t nt = sg.theta_s.size();
  if (nt < 3 || sg.values_db.size() != nt)
    throw ValidationError("spectrogram must hold >= 3 angle rows");
  const std::size_t nf = sg.grid.size();
  std::vector<double> traj(nf);

  for (std::size_t k = 0; k < nf; ++k) {
    std::size_t best = 0;
    for (std::size_t t = 1; t < nt; ++t)
      if (sg.values_db[t][k] < sg.values_db[best][k]) best = t;

    // Neighbors on the pi-periodic angle axis.
    const std::size_t ip = (best == 0) ? nt - 1 : best - 1;
    const std::size_t in_ = (best + 1 == nt) ? 0 : best + 1;
    const double t0 = sg.theta_s[best];
    const double d1 = ((best == 0) ? sg.theta_s[ip] - kPi : sg.theta_s[ip]) - t0;
    const double d3 = ((best + 1 == nt) ? sg.theta_s[in_] + kPi : sg.theta_s[in_]) - t0;
    const double a_off = sg.values_db[ip][k] - sg.values_db[best][k];
    const double b_off = sg.values_db[in_][k] - sg.values_db[best][k];

    double refine = 0.0;
    const double det = d1 * d3 * (d1 - d3);
    if (std::abs(det) > 0.0) {
      const double ca = (a_off * d3 - b_off * d1) / det;
      const double cb = (b_off * d1 * d1 - a_off * d3 * d3) / det;
      if (ca > 0.0) refine = std::clamp(-cb / (2.0 * ca), d1, d3);
    }
    traj[k] = wrap_half_turn(t0 + refine);
  }
  return SpectrumSeries(sg.grid, traj, Normalization::kAbsolute, SeriesKind::kAngle);
}

SpectrumSeries db_normalize(const SpectrumSeries& spectrum, double shot_reference) {
  if (spectrum.kind != SeriesKind::kPsd)
    throw ValidationError("db_normalize expects a PSD series");
  if (!std::isfinite(shot_reference) || shot_reference <= 0.0)
    throw ValidationError("shot reference must be finite and > 0");
  std::vector<double> out(spectrum.size());
  for (std::size_t k = 0; k < spectrum.size(); ++k) {
    const double v = spectrum.values[k].real();
    if (v <= 0.0)
      throw ValidationError("non-positive spectral value at bin " + std::to_string(k));
    out[k] = 10.0 * std::log10(v / shot_reference);
  }
  return SpectrumSeries(spectrum.grid, out, Normalization::kShotNoise, SeriesKind::kGain);
}

BandStats band_stats(const SpectrumSeries& s, double lo_hz, double hi_hz) {
  if (!(lo_hz <= hi_hz)) throw ValidationError("band_stats needs lo <= hi");
  BandStats st;
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) {
    const double f = s.grid.value_hz(k);
    if (f < lo_hz || f > hi_hz) continue;
    const double v = s.values[k].real();
    sum += v;
    sum2 += v * v;
    ++st.bins;
  }
  if (st.bins == 0) throw ValidationError("no bins inside the requested band");
  const double n = static_cast<double>(st.bins);
  st.mean = sum / n;
  if (st.bins > 1) {
    const double var = std::max(0.0, (sum2 - n * st.mean * st.mean) / (n - 1.0));
    st.stderr_of_mean = std::sqrt(var / n);
  }
  return st;
}

std::vector<double> running_median(const std::vector<double>& x, std::size_t window) {
  if (window == 0 || window % 2 == 0)
    throw ValidationError("running_median window must be odd");
  const std::size_t half = window / 2;
  std::vector<double> out(x.size());
  std::vector<double> win;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t lo = (i >= half) ? i - half : 0;
    const std::size_t hi = std::min(x.size(), i + half + 1);
    win.assign(x.begin() + static_cast<std::ptrdiff_t>(lo),
               x.begin() + static_cast<std::ptrdiff_t>(hi));
    const auto mid = win.begin() + static_cast<std::ptrdiff_t>(win.size() / 2);
    std::nth_element(win.begin(), mid, win.end());
    const double upper = *mid;
    if (win.size() % 2 == 1) {
      out[i] = upper;
    } else {
      // Truncated even-length window near an edge: average the two middle
      // order statistics, mirroring the usual even-sample median.
      out[i] = 0.5 * (*std::max_element(win.begin(), mid) + upper);
    }
  }
  return out;
}

}  // namespace sqz::est
