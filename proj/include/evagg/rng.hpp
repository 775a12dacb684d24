#pragma once

#include <cstdint>

namespace evagg {

// All randomness is counter-based: every draw is a pure function of
// (seed, stream, purpose, counter). Streams identify an agent / day /
// trajectory, purposes separate independent concerns so that e.g. corrupting
// reported SOC can never shift the switching draws. This is what makes serial
// and parallel execution bit-identical and lets any sub-stream be replayed.
enum class Purpose : uint64_t {
  sampling = 1,    // fleet parameter sampling
  switching = 2,   // broadcast switching decisions
  excitation = 3,  // random control inputs for data collection
  soc_noise = 4,   // reported-SOC corruption
  init = 5,        // identification initialization draws
  profile = 6,     // synthetic wind / load profiles
  misc = 7,
};

uint64_t hash_mix(uint64_t seed, uint64_t stream, uint64_t purpose, uint64_t counter);

// Stateful view over the counter sequence of one (seed, stream, purpose).
class Rng {
 public:
  Rng(uint64_t seed, uint64_t stream, Purpose purpose)
      : seed_(seed), stream_(stream), purpose_(static_cast<uint64_t>(purpose)) {}

  uint64_t next();
  double uniform();                      // [0, 1)
  double uniform(double lo, double hi);  // [lo, hi)
  double uniform_pos();                  // (0, 1]
  double normal();                       // standard normal (Box-Muller, no caching)
  double normal(double mean, double stddev);
  // Rejection sampling; bounds honored exactly.
  double trunc_normal(double mean, double stddev, double lo, double hi);
  double wrapped_normal_24(double mean, double stddev);  // folded into [0, 24) h

 private:
  uint64_t seed_;
  uint64_t stream_;
  uint64_t purpose_;
  uint64_t counter_ = 0;
};

}  // namespace evagg
