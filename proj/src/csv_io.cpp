#include "sqz/csv_io.hpp"

#include <cerrno>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "sqz/digest.hpp"

namespace sqz::io {
namespace {

using ordered_json = nlohmann::ordered_json;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// All writers stage into "<path>.tmp" and rename, so readers never observe a
// half-written file.
class AtomicWriter {
 public:
  explicit AtomicWriter(const std::string& path)
      : path_(path), tmp_(path + ".tmp"), out_(tmp_, std::ios::binary | std::ios::trunc) {
    if (!out_) throw DataError("cannot open \"" + tmp_ + "\" for writing");
  }

  std::ostream& stream() { return out_; }

  void commit() {
    out_.flush();
    if (!out_) throw DataError("write to \"" + tmp_ + "\" failed");
    out_.close();
    if (std::rename(tmp_.c_str(), path_.c_str()) != 0)
      throw DataError("cannot rename \"" + tmp_ + "\" to \"" + path_ + "\": " +
                      std::strerror(errno));
    committed_ = true;
  }

  ~AtomicWriter() {
    if (!committed_) {
      out_.close();
      std::remove(tmp_.c_str());
    }
  }

 private:
  std::string path_, tmp_;
  std::ofstream out_;
  bool committed_ = false;
};

double parse_double(const std::string& token, std::size_t line_no,
                    const std::string& path) {
  const char* begin = token.c_str();
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0')
    throw DataError("\"" + path + "\": malformed number \"" + token + "\"", line_no);
  if (!std::isfinite(v))
    throw DataError("\"" + path + "\": non-finite value \"" + token + "\"", line_no);
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, ',')) out.push_back(cur);
  return out;
}

}  // namespace

void write_pair_csv(const std::string& path, const std::vector<double>& signal,
                    const std::vector<double>& idler, double sample_rate_hz,
                    std::uint64_t seed, double theta_s_deg) {
  if (signal.size() != idler.size() || signal.empty())
    throw DataError("pair record channels must be non-empty and equal-length");
  AtomicWriter w(path);
  char header[128];
  std::snprintf(header, sizeof(header), "# fs=%.17g seed=%" PRIu64 " theta_s=%.17g\n",
                sample_rate_hz, seed, theta_s_deg);
  w.stream() << header;
  for (std::size_t i = 0; i < signal.size(); ++i)
    w.stream() << fmt(signal[i]) << ',' << fmt(idler[i]) << '\n';
  w.commit();
}

PairRecord read_pair_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open \"" + path + "\"");
  std::string line;
  if (!std::getline(in, line))
    throw DataError("\"" + path + "\": empty file", 1);
  PairRecord rec;
  {
    char trailing = '\0';
    const int got = std::sscanf(line.c_str(), "# fs=%lf seed=%" SCNu64 " theta_s=%lf %c",
                                &rec.sample_rate_hz, &rec.seed, &rec.theta_s_deg,
                                &trailing);
    if (got != 3)
      throw DataError("\"" + path + "\": header must be \"# fs=<Hz> seed=<u64>"
                      " theta_s=<deg>\"", 1);
    if (!std::isfinite(rec.sample_rate_hz) || rec.sample_rate_hz <= 0.0)
      throw DataError("\"" + path + "\": sample rate must be finite and > 0", 1);
    if (!std::isfinite(rec.theta_s_deg))
      throw DataError("\"" + path + "\": homodyne angle must be finite", 1);
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) throw DataError("\"" + path + "\": blank line", line_no);
    const auto cols = split_csv(line);
    if (cols.size() != 2)
      throw DataError("\"" + path + "\": expected \"signal,idler\"", line_no);
    rec.signal.push_back(parse_double(cols[0], line_no, path));
    rec.idler.push_back(parse_double(cols[1], line_no, path));
  }
  if (rec.signal.empty())
    throw DataError("\"" + path + "\": no samples after the header", 1);
  return rec;
}

namespace {

bool complex_kind(SeriesKind kind) {
  return kind == SeriesKind::kCsd || kind == SeriesKind::kGain;
}

// Angle series travel in degrees in files; everything else is written as
// stored.
double to_file_units(double v, SeriesKind kind) {
  return kind == SeriesKind::kAngle ? rad_to_deg(v) : v;
}
double from_file_units(double v, SeriesKind kind) {
  return kind == SeriesKind::kAngle ? deg_to_rad(v) : v;
}

}  // namespace

void write_spectrum_csv(const std::string& path, const SpectrumSeries& series) {
  AtomicWriter w(path);
  const bool cx = complex_kind(series.kind);
  w.stream() << (cx ? "freq_hz,value,imag\n" : "freq_hz,value\n");
  for (std::size_t k = 0; k < series.values.size(); ++k) {
    w.stream() << fmt(series.grid.value_hz(k)) << ','
               << fmt(to_file_units(series.values[k].real(), series.kind));
    if (cx) w.stream() << ',' << fmt(series.values[k].imag());
    w.stream() << '\n';
  }
  w.commit();
}

SpectrumSeries read_spectrum_csv(const std::string& path, SeriesKind expected_kind,
                                 Normalization normalization) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open \"" + path + "\"");
  std::string line;
  if (!std::getline(in, line)) throw DataError("\"" + path + "\": empty file", 1);
  const bool cx = complex_kind(expected_kind);
  const std::string want_header = cx ? "freq_hz,value,imag" : "freq_hz,value";
  if (line != want_header)
    throw DataError("\"" + path + "\": expected header \"" + want_header + "\"", 1);

  std::vector<double> omega;
  std::vector<std::complex<double>> values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) throw DataError("\"" + path + "\": blank line", line_no);
    const auto cols = split_csv(line);
    if (cols.size() != (cx ? 3u : 2u))
      throw DataError("\"" + path + "\": wrong column count", line_no);
    omega.push_back(hz_to_rad(parse_double(cols[0], line_no, path)));
    const double re = from_file_units(parse_double(cols[1], line_no, path), expected_kind);
    const double im = cx ? parse_double(cols[2], line_no, path) : 0.0;
    values.emplace_back(re, im);
  }
  if (omega.empty()) throw DataError("\"" + path + "\": no rows after the header", 1);
  try {
    return SpectrumSeries(FrequencyGrid(std::move(omega)), std::move(values),
                          normalization, expected_kind);
  } catch (const ValidationError& e) {
    throw DataError("\"" + path + "\": " + e.what());
  }
}

void write_spectrogram_csv(const std::string& path, const est::Spectrogram& sg) {
  AtomicWriter w(path);
  w.stream() << "freq_hz";
  for (double t : sg.theta_s) w.stream() << ',' << fmt(rad_to_deg(t));
  w.stream() << '\n';
  for (std::size_t k = 0; k < sg.grid.size(); ++k) {
    w.stream() << fmt(sg.grid.value_hz(k));
    for (std::size_t t = 0; t < sg.theta_s.size(); ++t)
      w.stream() << ',' << fmt(sg.values_db[t][k]);
    w.stream() << '\n';
  }
  w.commit();
}

void write_spectrum_json(const std::string& path, const SpectrumSeries& series) {
  ordered_json j;
  j["freq_hz"] = ordered_json::array();
  j["value"] = ordered_json::array();
  const bool cx = complex_kind(series.kind);
  if (cx) j["imag"] = ordered_json::array();
  for (std::size_t k = 0; k < series.values.size(); ++k) {
    j["freq_hz"].push_back(series.grid.value_hz(k));
    j["value"].push_back(to_file_units(series.values[k].real(), series.kind));
    if (cx) j["imag"].push_back(series.values[k].imag());
  }
  write_text_atomic(path, j.dump(2) + "\n");
}

void write_spectrogram_json(const std::string& path, const est::Spectrogram& sg) {
  ordered_json j;
  j["theta_s_deg"] = ordered_json::array();
  for (double t : sg.theta_s) j["theta_s_deg"].push_back(rad_to_deg(t));
  j["freq_hz"] = ordered_json::array();
  for (std::size_t k = 0; k < sg.grid.size(); ++k)
    j["freq_hz"].push_back(sg.grid.value_hz(k));
  j["values_db"] = ordered_json::array();
  for (const auto& row : sg.values_db) j["values_db"].push_back(row);
  write_text_atomic(path, j.dump(2) + "\n");
}

void write_text_atomic(const std::string& path, const std::string& content) {
  AtomicWriter w(path);
  w.stream() << content;
  w.commit();
}

std::string file_digest_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open \"" + path + "\"");
  digest::Fnv1a h;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    h.bytes(buf, static_cast<std::size_t>(in.gcount()));
    if (!in) break;
  }
  return digest::hex(h.value());
}

}  // namespace sqz::io
