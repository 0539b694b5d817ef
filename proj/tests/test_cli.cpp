#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "sqz/csv_io.hpp"
#include "sqz/digest.hpp"
#include "sqz/estimator.hpp"
#include "sqz/types.hpp"

// End-to-end checks of the command-line tool (binary path in SQZ_BIN) plus
// direct coverage of the CSV/JSON writers it is built on.

using namespace sqz;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string output;  // stdout and stderr interleaved
};

RunResult run_tool(const std::string& args) {
  const char* bin = std::getenv("SQZ_BIN");
  REQUIRE_MESSAGE(bin != nullptr, "SQZ_BIN must point at the sqz binary");
  const std::string cmd = std::string(bin) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  RunResult r;
  char buf[4096];
  std::size_t got;
  while ((got = fread(buf, 1, sizeof(buf), pipe)) > 0) r.output.append(buf, got);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

// Fresh scratch directory per test, under the test runner's cwd.
std::string scratch(const std::string& name) {
  const std::string dir = "cli_scratch/" + name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  REQUIRE(out.good());
  out << content;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE_MESSAGE(in.good(), ("missing file: " + path));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// A fast, fully featured run configuration: 4-second record at 16.384 kHz.
std::string small_config(std::uint64_t seed, const std::string& extra_fit = "") {
  std::ostringstream ss;
  ss << R"({
  "schema_version": 1,
  "spin": {"larmor_hz": 3000, "readout_hz": 2000, "decay_hz": 240,
           "bb_readout_hz": 8000, "bb_decay_hz": 80000, "n_th": 3.5},
  "epr": {"r": 1.42, "eta_s": 0.92, "eta_i_in": 0.89, "eta_i_out": 0.90},
  "detection": {"theta_s_deg": 90.0, "delta_theta_i_deg": 0.0},
  "simulate": {"sample_rate_hz": 16384, "duration_s": 4.0, "seed": )"
     << seed << R"(, "theta_s_deg": [90.0]},
  "welch": {"segment_length": 1024, "overlap": 0.5, "window": "hann"},
  "analyze": {"guard_fraction": 0.1, "band_lo_hz": 1000, "band_hi_hz": 6000},
  "fit": {"free": [{"name": "larmor", "lo": 1500, "hi": 6000}],
          "band_lo_hz": 1000, "band_hi_hz": 6000,
          "restarts": 2, "max_evaluations": 2000)"
     << extra_fit << R"(},
  "predict": {"grid_lo_hz": 500, "grid_hi_hz": 8000, "grid_points": 128}
})";
  return ss.str();
}

}  // namespace

TEST_CASE("pair records survive a write/read round trip byte-exactly") {
  const std::string dir = scratch("pair_roundtrip");
  std::vector<double> signal = {1.0, -0.25, 3.5e-17, 2.0 / 3.0};
  std::vector<double> idler = {-1.0, 0.125, 1e300, -2.0 / 3.0};
  const std::string path = dir + "/pair.csv";
  io::write_pair_csv(path, signal, idler, 16384.0, 77, 45.0);

  const io::PairRecord rec = io::read_pair_csv(path);
  CHECK(rec.sample_rate_hz == 16384.0);
  CHECK(rec.seed == 77);
  CHECK(rec.theta_s_deg == 45.0);
  REQUIRE(rec.signal.size() == signal.size());
  for (std::size_t i = 0; i < signal.size(); ++i) {
    CHECK(rec.signal[i] == signal[i]);  // %.17g preserves doubles exactly
    CHECK(rec.idler[i] == idler[i]);
  }

  // Rewriting the recovered record reproduces the file byte for byte.
  const std::string path2 = dir + "/pair2.csv";
  io::write_pair_csv(path2, rec.signal, rec.idler, rec.sample_rate_hz, rec.seed,
                     rec.theta_s_deg);
  CHECK(read_file(path) == read_file(path2));
  CHECK(io::file_digest_hex(path) == io::file_digest_hex(path2));

  // No stray temp file left behind.
  CHECK(!fs::exists(path + ".tmp"));
}

TEST_CASE("malformed pair files are rejected with 1-based line numbers") {
  const std::string dir = scratch("pair_reject");
  const std::string path = dir + "/bad.csv";

  write_file(path, "no header\n1,2\n");
  CHECK_THROWS_AS(io::read_pair_csv(path), DataError);

  write_file(path, "# fs=1024 seed=1 theta_s=0\n1.0,2.0\n1.0\n");
  try {
    io::read_pair_csv(path);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(e.line() == 3);
  }

  write_file(path, "# fs=1024 seed=1 theta_s=0\n1.0,nan\n");
  CHECK_THROWS_AS(io::read_pair_csv(path), DataError);
  write_file(path, "# fs=-5 seed=1 theta_s=0\n1.0,2.0\n");
  CHECK_THROWS_AS(io::read_pair_csv(path), DataError);
  write_file(path, "# fs=1024 seed=1 theta_s=0\n");
  CHECK_THROWS_AS(io::read_pair_csv(path), DataError);
}

TEST_CASE("spectrum files round-trip values, kinds, and angle units") {
  const std::string dir = scratch("spectrum_roundtrip");
  const auto grid = FrequencyGrid::linspace_hz(1e3, 2e3, 5);

  // Complex kind: three columns.
  std::vector<std::complex<double>> cvals;
  for (std::size_t k = 0; k < 5; ++k)
    cvals.emplace_back(0.1 * static_cast<double>(k) - 0.2, -1.0 / (1.0 + static_cast<double>(k)));
  const SpectrumSeries csd(grid, cvals, Normalization::kShotNoise, SeriesKind::kCsd);
  io::write_spectrum_csv(dir + "/csd.csv", csd);
  const auto csd2 =
      io::read_spectrum_csv(dir + "/csd.csv", SeriesKind::kCsd, Normalization::kShotNoise);
  REQUIRE(csd2.size() == csd.size());
  for (std::size_t k = 0; k < csd.size(); ++k) {
    CHECK(csd2.values[k] == csd.values[k]);
    CHECK(csd2.grid[k] == doctest::Approx(csd.grid[k]).epsilon(1e-15));
  }

  // Angle kind: stored in radians, written in degrees.
  const SpectrumSeries ang(grid, std::vector<double>{0.0, kPi / 4, kPi / 2, 2.0, 3.0},
                           Normalization::kAbsolute, SeriesKind::kAngle);
  io::write_spectrum_csv(dir + "/angle.csv", ang);
  const std::string text = read_file(dir + "/angle.csv");
  CHECK(text.find("45") != std::string::npos);  // pi/4 appears as degrees
  const auto ang2 =
      io::read_spectrum_csv(dir + "/angle.csv", SeriesKind::kAngle, Normalization::kAbsolute);
  for (std::size_t k = 0; k < ang.size(); ++k)
    CHECK(ang2.values[k].real() == doctest::Approx(ang.values[k].real()).epsilon(1e-14));

  // Wrong expected kind: the two-column file fails the three-column header.
  CHECK_THROWS_AS(
      io::read_spectrum_csv(dir + "/angle.csv", SeriesKind::kCsd, Normalization::kAbsolute),
      DataError);
}

TEST_CASE("known bytes produce the frozen FNV-1a digest") {
  const std::string dir = scratch("digest");
  write_file(dir + "/probe.bin", "squeezed light\n");
  CHECK(io::file_digest_hex(dir + "/probe.bin") == "fe1edebab59c7ddd");
  CHECK_THROWS_AS(io::file_digest_hex(dir + "/absent.bin"), DataError);
}

TEST_CASE("simulate is byte-deterministic for a fixed config and seed") {
  const std::string dir = scratch("determinism");
  write_file(dir + "/cfg.json", small_config(2024));

  const auto r1 = run_tool("simulate --config " + dir + "/cfg.json --out " + dir + "/a");
  REQUIRE_MESSAGE(r1.code == 0, r1.output);
  const auto r2 = run_tool("simulate --config " + dir + "/cfg.json --out " + dir + "/b");
  REQUIRE_MESSAGE(r2.code == 0, r2.output);

  const std::string rec = "/record_theta090.00.csv";
  CHECK(read_file(dir + "/a" + rec) == read_file(dir + "/b" + rec));

  // A different seed must change the samples.
  const auto r3 = run_tool("simulate --config " + dir + "/cfg.json --seed 777 --out " +
                           dir + "/c");
  REQUIRE_MESSAGE(r3.code == 0, r3.output);
  CHECK(read_file(dir + "/a" + rec) != read_file(dir + "/c" + rec));
  // The --seed override lands in the record header.
  CHECK(read_file(dir + "/c" + rec).rfind("# fs=16384 seed=777", 0) == 0);
}

TEST_CASE("config errors exit 2 and name the offending key") {
  const std::string dir = scratch("config_errors");

  write_file(dir + "/unknown.json",
             R"({"schema_version": 1, "simulate": {"thetas": [1]}})");
  auto r = run_tool("simulate --config " + dir + "/unknown.json --out " + dir + "/o");
  CHECK(r.code == 2);
  CHECK(r.output.find("simulate.thetas") != std::string::npos);

  write_file(dir + "/missing.json", R"({"schema_version": 1,
    "spin": {"readout_hz": 2000, "decay_hz": 240},
    "epr": {"r": 1.0}, "detection": {},
    "simulate": {"sample_rate_hz": 16384, "duration_s": 1.0}})");
  r = run_tool("simulate --config " + dir + "/missing.json --out " + dir + "/o");
  CHECK(r.code == 2);
  CHECK(r.output.find("spin.larmor_hz") != std::string::npos);

  write_file(dir + "/version.json", R"({"schema_version": 99})");
  r = run_tool("predict --config " + dir + "/version.json --out " + dir + "/o");
  CHECK(r.code == 2);
  CHECK(r.output.find("schema_version") != std::string::npos);

  // Usage errors (no config at all) are also configuration failures.
  r = run_tool("simulate");
  CHECK(r.code == 2);

  write_file(dir + "/notjson.json", "{nope");
  r = run_tool("predict --config " + dir + "/notjson.json --out " + dir + "/o");
  CHECK(r.code == 2);
}

TEST_CASE("malformed data files exit 3 and report the line") {
  const std::string dir = scratch("data_errors");
  write_file(dir + "/cfg.json", small_config(5));
  write_file(dir + "/bad.csv", "# fs=16384 seed=1 theta_s=0\n0.5,bogus\n");

  const auto r = run_tool("analyze --config " + dir + "/cfg.json --out " + dir +
                          "/o --data " + dir + "/bad.csv");
  CHECK(r.code == 3);
  CHECK(r.output.find("line 2") != std::string::npos);

  const auto r2 = run_tool("report --out " + dir + "/never_written");
  CHECK(r2.code == 3);
}

TEST_CASE("a crippled optimizer exits 4 but still writes its result") {
  const std::string dir = scratch("nonconvergence");
  write_file(dir + "/cfg.json", small_config(31337));
  auto r = run_tool("simulate --config " + dir + "/cfg.json --out " + dir + "/rec");
  REQUIRE_MESSAGE(r.code == 0, r.output);

  write_file(dir + "/cfg_stub.json",
             small_config(31337, R"(, "restarts": 1, "max_evaluations": 2)"));
  r = run_tool("fit --config " + dir + "/cfg_stub.json --out " + dir +
               "/fit --data " + dir + "/rec/record_theta090.00.csv");
  CHECK(r.code == 4);
  const std::string fit_json = read_file(dir + "/fit/fit.json");
  CHECK(fit_json.find("\"converged\": false") != std::string::npos);
}

TEST_CASE("simulate, analyze, fit, predict, report chain end to end") {
  const std::string dir = scratch("chain");
  write_file(dir + "/cfg.json", small_config(31337));

  auto r = run_tool("simulate --config " + dir + "/cfg.json --out " + dir + "/rec");
  REQUIRE_MESSAGE(r.code == 0, r.output);
  const std::string record = dir + "/rec/record_theta090.00.csv";

  r = run_tool("analyze --config " + dir + "/cfg.json --out " + dir +
               "/an --data " + record);
  REQUIRE_MESSAGE(r.code == 0, r.output);
  for (const char* name :
       {"record_theta090.00_psd_signal.csv", "record_theta090.00_psd_idler.csv",
        "record_theta090.00_csd.csv", "record_theta090.00_gain.csv",
        "record_theta090.00_conditional.csv", "summary.json", "manifest.json"})
    CHECK_MESSAGE(fs::exists(dir + "/an/" + name), name);

  // The record was synthesized at 90 degrees with strong correlations, so
  // conditioning must help: band-mean conditional dB below signal dB.
  const std::string summary = read_file(dir + "/an/summary.json");
  const auto sig_pos = summary.find("\"signal_band_db\"");
  const auto cond_pos = summary.find("\"conditional_band_db\"");
  REQUIRE(sig_pos != std::string::npos);
  REQUIRE(cond_pos != std::string::npos);
  auto mean_after = [&](std::size_t pos) {
    const auto m = summary.find("\"mean\":", pos);
    REQUIRE(m != std::string::npos);
    return std::strtod(summary.c_str() + m + 7, nullptr);
  };
  CHECK(mean_after(cond_pos) < mean_after(sig_pos) - 0.5);

  r = run_tool("fit --config " + dir + "/cfg.json --out " + dir + "/fit --data " +
               record);
  REQUIRE_MESSAGE(r.code == 0, r.output);
  const std::string fit_json = read_file(dir + "/fit/fit.json");
  CHECK(fit_json.find("\"converged\": true") != std::string::npos);
  // Recovered oscillator frequency lands near the synthesis truth of 3 kHz.
  const auto lpos = fit_json.find("\"larmor_hz\":");
  REQUIRE(lpos != std::string::npos);
  const double larmor = std::strtod(fit_json.c_str() + lpos + 12, nullptr);
  CHECK(larmor == doctest::Approx(3000.0).epsilon(0.05));

  r = run_tool("predict --config " + dir + "/cfg.json --out " + dir + "/pre");
  REQUIRE_MESSAGE(r.code == 0, r.output);
  CHECK(fs::exists(dir + "/pre/conditional_optimal.csv"));
  CHECK(fs::exists(dir + "/pre/squeezing_angle.csv"));
  const std::string psum = read_file(dir + "/pre/summary.json");
  CHECK(psum.find("\"sql_bandwidth_hz\"") != std::string::npos);
  CHECK(psum.find("\"entangled\": true") != std::string::npos);

  r = run_tool("report --out " + dir + "/fit");
  CHECK(r.code == 0);
  CHECK(r.output.find("command: \"fit\"") != std::string::npos);
  CHECK(r.output.find("larmor_hz") != std::string::npos);
}

TEST_CASE("a bare vacuum configuration synthesizes flat white noise") {
  const std::string dir = scratch("vacuum");
  write_file(dir + "/cfg.json", R"({
  "schema_version": 1,
  "spin": {"larmor_hz": 3000, "readout_hz": 0, "decay_hz": 240},
  "epr": {"r": 0},
  "detection": {},
  "simulate": {"sample_rate_hz": 16384, "duration_s": 4.0, "seed": 9}
})");
  const auto r = run_tool("simulate --config " + dir + "/cfg.json --out " + dir + "/o");
  REQUIRE_MESSAGE(r.code == 0, r.output);

  const io::PairRecord rec = io::read_pair_csv(dir + "/o/record_theta000.00.csv");
  est::WelchConfig wcfg;
  wcfg.segment_length = 1024;
  const double shot = 2.0 / rec.sample_rate_hz;
  for (const auto* chan : {&rec.signal, &rec.idler}) {
    const auto psd = est::welch_psd(*chan, rec.sample_rate_hz, wcfg);
    const auto stats = est::band_stats(psd, 100.0, 8000.0);
    CHECK(stats.mean == doctest::Approx(shot).epsilon(0.02));
  }
}
