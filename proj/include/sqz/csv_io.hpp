// CSV import/export for time-series pairs, spectra, and spectrograms.
//
// Formats (all values 17 significant digits so round-trips are exact):
//  - pair records:  "# fs=<Hz> seed=<u64> theta_s=<deg>" header, then
//    "signal,idler" rows;
//  - spectra:       "freq_hz,value" or "freq_hz,value,imag" header + rows;
//    angle series are written in degrees (human units at the file boundary)
//    and converted back to radians on read;
//  - spectrograms:  matrix with an angle header row
//    ("freq_hz,<theta_deg>,...").
//
// Readers are strict: malformed rows and non-finite numbers raise DataError
// carrying the 1-based line number.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sqz/estimator.hpp"
#include "sqz/types.hpp"

namespace sqz::io {

struct PairRecord {
  std::vector<double> signal;
  std::vector<double> idler;
  double sample_rate_hz = 0.0;
  std::uint64_t seed = 0;
  double theta_s_deg = 0.0;
};

// Atomic (write-temp-rename) writers; throw DataError on filesystem failure.
void write_pair_csv(const std::string& path, const std::vector<double>& signal,
                    const std::vector<double>& idler, double sample_rate_hz,
                    std::uint64_t seed, double theta_s_deg);

PairRecord read_pair_csv(const std::string& path);

// kind controls the value column: complex kinds add the "imag" column, angle
// series convert radians <-> degrees at the boundary.
void write_spectrum_csv(const std::string& path, const SpectrumSeries& series);

// expected_kind must match what the file holds (column count and, for angles,
// the unit conversion). The returned series carries the given normalization
// tag untouched.
SpectrumSeries read_spectrum_csv(const std::string& path, SeriesKind expected_kind,
                                 Normalization normalization);

void write_spectrogram_csv(const std::string& path, const est::Spectrogram& sg);

// JSON alternatives for the same payloads ({"freq_hz": [...], "value": [...],
// "imag": [...]?}); selected by the CLI --format switch.
void write_spectrum_json(const std::string& path, const SpectrumSeries& series);
void write_spectrogram_json(const std::string& path, const est::Spectrogram& sg);

// Writes a preassembled JSON document (used for summaries and manifests).
void write_text_atomic(const std::string& path, const std::string& content);

// FNV-1a digest of a file's raw bytes, as a 16-digit hex string.
std::string file_digest_hex(const std::string& path);

}  // namespace sqz::io
