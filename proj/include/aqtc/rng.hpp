// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace aqtc {

// Portable random stream. The engine is std::mt19937_64, whose output
// sequence is fixed by the C++ standard; every distribution below is derived
// from raw engine words by hand, because the standard library distributions
// are implementation-defined and would break cross-platform reproducibility.
//
//   uniform():  top 53 bits of one word, scaled by 2^-53, in [0, 1)
//   below(n):   high 64 bits of word * n (multiply-shift), in [0, n)
//   normal():   Box-Muller on two uniform() draws, cosine branch only
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::size_t below(std::size_t n) {
    const auto product = static_cast<unsigned __int128>(engine_()) * n;
    return static_cast<std::size_t>(product >> 64);
  }

  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Fisher-Yates, walking from the back.
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = i;
    shuffle(out);
    return out;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace aqtc
