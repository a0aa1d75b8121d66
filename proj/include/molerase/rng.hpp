#pragma once

#include <cstdint>

namespace molerase {

// Counter-keyed random stream. Every (master_seed, trial, site, step) tuple
// names an independent stream, so trials and sites can run in any order and
// still produce byte-identical records. The mixer is splitmix64 applied to
// the key words; draws advance an internal splitmix64 state.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : state_(seed) {}

  static RngStream keyed(std::uint64_t master, std::uint64_t a,
                         std::uint64_t b, std::uint64_t c);

  std::uint64_t next_u64();

  // Uniform on (0,1); never returns 0 or 1 exactly.
  double uniform();
  double uniform(double lo, double hi);
  bool bernoulli(double p);
  double normal();  // standard normal, Box-Muller
  double normal(double mean, double sigma);
  // Waiting time for a Poisson process of the given rate; +inf when rate<=0.
  double exponential(double rate);
  int poisson(double mean);
  // Uniform integer in [0, n).
  int uniform_int(int n);

 private:
  std::uint64_t state_;
};

}  // namespace molerase
