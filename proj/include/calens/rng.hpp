#pragma once

#include <cstdint>
#include <vector>

namespace calens {

// Counter-based generator built on the SplitMix64 finalizer: the k-th draw of
// a stream with key K is mix(K + (k+1) * 0x9E3779B97F4A7C15). Every dataset,
// initialization, fold shuffle and dropout mask in the toolkit derives from
// this construction, so reruns with identical seeds are byte-identical.
std::uint64_t splitmix_at(std::uint64_t key, std::uint64_t counter);

class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  // Independent substream addressed by an integer path element.
  CounterRng derive(std::uint64_t stream) const;

  std::uint64_t next_u64();
  // Uniform on [0,1) with 53 random bits.
  double next_unit();
  // Uniform on (0,1]; safe as a log argument.
  double next_unit_open();
  double next_uniform(double lo, double hi);
  // Standard normal via Box-Muller (two draws per call).
  double next_normal();
  // Uniform integer in [0, n) by 128-bit multiply-shift; n > 0.
  std::uint64_t next_below(std::uint64_t n);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace calens
