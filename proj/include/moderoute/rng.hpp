#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace moderoute {

std::uint64_t splitmix64(std::uint64_t x);

/// Seed for an independent random stream keyed by (seed, key, index). Rollout
/// members, probes and task draws each get their own stream so results do not
/// depend on scheduling.
std::uint64_t stream_seed(std::uint64_t seed, std::string_view key, std::uint64_t index = 0);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  std::uint64_t next() { return engine_(); }

  /// Index drawn from a probability vector by inverse CDF.
  std::size_t categorical(std::span<const double> probs);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

/// Fisher-Yates with modulo draws; the order depends only on the stream.
template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[rng.next() % i]);
}

}  // namespace moderoute
