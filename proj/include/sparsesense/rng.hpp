#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace sparsesense {

/// Seedable generator with platform-independent output streams.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. The standard distributions are implementation-defined, so every
/// derived quantity (bounded integers, uniforms, normals, coin flips) is
/// computed here from raw 64-bit draws:
///   - uniform01: top 53 bits scaled by 2^-53.
///   - below(n): rejection sampling on the top bits, unbiased.
///   - normal: Marsaglia polar method, caching the second variate.
///   - coin: the most significant bit of one draw.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  double uniform01();
  std::uint64_t below(std::uint64_t n);
  double normal();
  bool coin() { return (engine_() >> 63) != 0; }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Mixes a base seed with a stream id so independent consumers never share a stream.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// k distinct indices drawn uniformly from [0, n) by partial Fisher-Yates, in draw order.
std::vector<int> sample_without_replacement(int n, int k, Rng& rng);

}  // namespace sparsesense
