#pragma once

#include <complex>
#include <cstdint>
#include <random>

// Deterministic random-number plumbing for the synthesizer.
//
// Every (noise source, frequency block) pair gets its own generator whose
// seed is a pure function of the master seed, so the drawn numbers do not
// depend on evaluation order or worker count.
namespace sqz::rng {

// splitmix64 step: advances `state` and returns the next output word.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Collapses (master, stream, block) into one well-mixed 64-bit seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                 std::uint64_t block) {
  std::uint64_t s = master;
  std::uint64_t h = splitmix64(s);
  s ^= stream + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
  h = splitmix64(s);
  s ^= block + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
  return splitmix64(s);
}

// Seeded stream of standard normal and complex circular Gaussian variates.
// Uniforms take the top 53 bits of mt19937_64 output; normals come from the
// classic Box-Muller pair (cached second member), so the draw sequence is
// fully pinned by the seed and the call order.
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) : gen_(seed) {}

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  // Standard normal N(0, 1).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]: keeps log() finite
    const double u2 = uniform();
    const double rad = std::sqrt(-2.0 * std::log(u1));
    const double ang = 6.283185307179586476925286766559 * u2;
    spare_ = rad * std::sin(ang);
    have_spare_ = true;
    return rad * std::cos(ang);
  }

  // Circular complex Gaussian with E|z|^2 = 1.
  std::complex<double> circular() {
    const double a = normal();
    const double b = normal();
    constexpr double inv_sqrt2 = 0.70710678118654752440084436210485;
    return {a * inv_sqrt2, b * inv_sqrt2};
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace sqz::rng
