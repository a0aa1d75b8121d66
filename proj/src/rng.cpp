#include "molerase/rng.hpp"

#include <cmath>
#include <limits>

namespace molerase {

namespace {

inline std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

RngStream RngStream::keyed(std::uint64_t master, std::uint64_t a,
                           std::uint64_t b, std::uint64_t c) {
  std::uint64_t x = master;
  std::uint64_t s = splitmix64(x);
  x ^= a * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL;
  s ^= splitmix64(x);
  x ^= b * 0xda942042e4dd58b5ULL + 0xca01f9dd4f01bb21ULL;
  s ^= splitmix64(x);
  x ^= c * 0x9e6c63d0a4e0f6adULL + 0x3c6ef372fe94f82bULL;
  s ^= splitmix64(x);
  return RngStream(s);
}

std::uint64_t RngStream::next_u64() { return splitmix64(state_); }

double RngStream::uniform() {
  // 53-bit mantissa; shift into (0,1) by offsetting half an ulp.
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

bool RngStream::bernoulli(double p) {
  if (p <= 0.0) return false;
  if (p >= 1.0) return true;
  return uniform() < p;
}

double RngStream::normal() {
  double u1 = uniform();
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
}

double RngStream::normal(double mean, double sigma) {
  return mean + sigma * normal();
}

double RngStream::exponential(double rate) {
  if (rate <= 0.0) return std::numeric_limits<double>::infinity();
  return -std::log(uniform()) / rate;
}

int RngStream::poisson(double mean) {
  if (mean <= 0.0) return 0;
  if (mean < 40.0) {
    // Knuth's product method.
    double limit = std::exp(-mean);
    double prod = uniform();
    int k = 0;
    while (prod > limit) {
      prod *= uniform();
      ++k;
    }
    return k;
  }
  // Normal approximation is adequate at the means this model uses.
  double v = std::round(normal(mean, std::sqrt(mean)));
  return v < 0.0 ? 0 : static_cast<int>(v);
}

int RngStream::uniform_int(int n) {
  if (n <= 1) return 0;
  return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n));
}

}  // namespace molerase
