#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <stdexcept>
#include <vector>

namespace mmb {

/// Deterministic, splittable random stream. A stream is identified by a
/// 64-bit seed; substreams are derived by hashing labels into the seed, so
/// the same (root seed, label path) always yields the same byte stream and
/// streams with distinct paths are decorrelated.
///
/// All distributions are implemented on top of the engine's raw 64-bit
/// output, so results are identical across platforms and standard library
/// implementations.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  /// Derive the substream for `label`. Pure: does not consume from, nor
  /// depend on, the consumption state of this stream.
  [[nodiscard]] RngStream fork(std::uint64_t label) const {
    return RngStream(mix64(seed_ ^ mix64(label + 0x9e3779b97f4a7c15ull)));
  }

  /// Derive a substream along a label path, left to right.
  [[nodiscard]] RngStream at(std::initializer_list<std::uint64_t> path) const {
    RngStream s = *this;
    for (std::uint64_t label : path) s = s.fork(label);
    return s;
  }

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1), 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; pairs are cached.
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    // u1 in (0,1] so the log is finite
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.14159265358979323846 * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

  /// Unbiased uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("RngStream::below: n must be positive");
    const std::uint64_t max = ~std::uint64_t{0};
    const std::uint64_t limit = max - max % n;  // multiple of n
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

  static constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

/// Substream labels used by the optimizer loops. Streams are addressed by
/// (label, iteration, block) paths rather than consumption order, so traces
/// do not depend on the order blocks are processed within an iteration.
namespace stream_label {
inline constexpr std::uint64_t blocks = 1;        // block batch draw, per iteration
inline constexpr std::uint64_t data = 2;          // data batch draw, per (iteration, block)
inline constexpr std::uint64_t data_alt = 3;      // second batch for the estimator product
inline constexpr std::uint64_t grad_alpha_f = 10;
inline constexpr std::uint64_t grad_y_g = 11;
inline constexpr std::uint64_t hess_yy_g = 12;
inline constexpr std::uint64_t grad_x_f = 13;
inline constexpr std::uint64_t jac_xy_g = 14;
inline constexpr std::uint64_t grad_y_f = 15;
inline constexpr std::uint64_t tau_draw = 20;     // reported-iterate draw, per run
inline constexpr std::uint64_t init = 21;         // parameter initialization
inline constexpr std::uint64_t resample = 22;     // batch resampling attempts
}  // namespace stream_label

/// Sample k distinct block indices from {0..m-1}, uniformly without
/// replacement; the result is sorted. Marginal inclusion probability of each
/// block is k/m.
std::vector<int> sample_blocks(RngStream& rng, int m, int k);

/// Sample b indices uniformly with replacement from {0..n-1}.
std::vector<int> sample_data(RngStream& rng, int n, int b);

}  // namespace mmb
