#include "calens/rng.hpp"

#include <cmath>

namespace calens {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;
constexpr std::uint64_t kDeriveSalt = 0xD1B54A32D192ED03ull;
constexpr double kTwoPi = 6.283185307179586476925286766559;
}  // namespace

std::uint64_t splitmix_at(std::uint64_t key, std::uint64_t counter) {
  std::uint64_t z = key + kGolden * (counter + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

CounterRng CounterRng::derive(std::uint64_t stream) const {
  return CounterRng(splitmix_at(key_ ^ kDeriveSalt, stream));
}

std::uint64_t CounterRng::next_u64() { return splitmix_at(key_, counter_++); }

double CounterRng::next_unit() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double CounterRng::next_unit_open() {
  return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

double CounterRng::next_uniform(double lo, double hi) {
  return lo + (hi - lo) * next_unit();
}

double CounterRng::next_normal() {
  double u1 = next_unit_open();
  double u2 = next_unit();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

std::uint64_t CounterRng::next_below(std::uint64_t n) {
  return static_cast<std::uint64_t>(
      (static_cast<unsigned __int128>(next_u64()) * static_cast<unsigned __int128>(n)) >> 64);
}

}  // namespace calens
