#include "evagg/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace evagg {

namespace {

inline uint64_t splitmix(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

uint64_t hash_mix(uint64_t seed, uint64_t stream, uint64_t purpose, uint64_t counter) {
  uint64_t h = splitmix(seed);
  h = splitmix(h ^ (0xd1b54a32d192ed03ull * (stream + 1)));
  h = splitmix(h ^ (0x8cb92ba72f3d8dd7ull * (purpose + 1)));
  return splitmix(h ^ counter);
}

uint64_t Rng::next() { return hash_mix(seed_, stream_, purpose_, counter_++); }

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::uniform_pos() {
  return (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53;
}

double Rng::normal() {
  // Two fresh draws per variate; u1 in (0,1] keeps the log finite.
  const double u1 = uniform_pos();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double Rng::normal(double mean, double stddev) { return mean + stddev * normal(); }

double Rng::trunc_normal(double mean, double stddev, double lo, double hi) {
  if (!(lo < hi)) throw std::invalid_argument("trunc_normal: empty interval");
  const auto cdf = [&](double x) {
    return 0.5 * std::erfc(-(x - mean) / (stddev * std::sqrt(2.0)));
  };
  const double c_lo = cdf(lo), c_hi = cdf(hi);
  // Rejection is fast on any reasonable window; a window so narrow (or so
  // deep in a tail) that acceptance gets rare switches to inverse-CDF
  // bisection, which draws the identical distribution at fixed cost.
  if (c_hi - c_lo >= 1e-3) {
    for (int i = 0; i < 100000; ++i) {
      const double x = normal(mean, stddev);
      if (x >= lo && x <= hi) return x;
    }
  }
  const double target = c_lo + uniform() * (c_hi - c_lo);
  double a = lo, b = hi;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (a + b);
    (cdf(mid) < target ? a : b) = mid;
  }
  return 0.5 * (a + b);
}

double Rng::wrapped_normal_24(double mean, double stddev) {
  double x = std::fmod(normal(mean, stddev), 24.0);
  return x < 0.0 ? x + 24.0 : x;
}

}  // namespace evagg
