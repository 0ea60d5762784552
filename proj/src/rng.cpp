#include "mmb/rng.hpp"

#include <algorithm>
#include <numeric>

namespace mmb {

std::vector<int> sample_blocks(RngStream& rng, int m, int k) {
  if (m <= 0) throw std::invalid_argument("sample_blocks: m must be positive");
  if (k <= 0 || k > m)
    throw std::invalid_argument("sample_blocks: need 1 <= k <= m");
  std::vector<int> pool(static_cast<std::size_t>(m));
  std::iota(pool.begin(), pool.end(), 0);
  // partial Fisher-Yates: after i swaps the prefix holds an unbiased sample
  for (int i = 0; i < k; ++i) {
    const auto j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(m - i)));
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  pool.resize(static_cast<std::size_t>(k));
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::vector<int> sample_data(RngStream& rng, int n, int b) {
  if (n <= 0) throw std::invalid_argument("sample_data: n must be positive");
  if (b <= 0) throw std::invalid_argument("sample_data: b must be positive");
  std::vector<int> out(static_cast<std::size_t>(b));
  for (auto& idx : out) idx = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
  return out;
}

}  // namespace mmb
