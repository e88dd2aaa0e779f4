/* DeskST - a desk-scale end-to-end speech translation toolkit.
 * Copyright (C) 2026 DeskST Authors. All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace deskst {

// All randomness in the project flows through the helpers below so that runs
// are byte-reproducible across standard library implementations. The std
// distributions are avoided on purpose: their output is not pinned by the
// standard, mt19937_64 itself is.

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Stateless hash of a small key tuple; the basis of counter-based dropout.
inline uint64_t hash_u64(uint64_t a, uint64_t b = 0, uint64_t c = 0,
                         uint64_t d = 0) {
  uint64_t h = splitmix64(a);
  h = splitmix64(h ^ b);
  h = splitmix64(h ^ c);
  h = splitmix64(h ^ d);
  return h;
}

/// Map a 64-bit word to a double in [0, 1) using the top 53 bits.
inline double u64_to_unit(uint64_t x) {
  return static_cast<double>(x >> 11) * 0x1.0p-53;
}

/// Deterministic uniform in [0, 1) from any 64-bit generator.
template <class Gen>
double uniform_unit(Gen& g) {
  return u64_to_unit(g());
}

/// Uniform in [lo, hi).
template <class Gen>
double uniform_real(Gen& g, double lo, double hi) {
  return lo + (hi - lo) * uniform_unit(g);
}

/// Uniform integer in [0, n). Modulo bias is irrelevant at our scales;
/// determinism across platforms is what matters.
template <class Gen>
uint64_t uniform_index(Gen& g, uint64_t n) {
  return g() % n;
}

/// Standard normal via Box-Muller on our own uniforms.
template <class Gen>
double normal(Gen& g) {
  double u1 = uniform_unit(g);
  double u2 = uniform_unit(g);
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * 3.14159265358979323846 * u2);
}

/// Fisher-Yates with explicit index draws; std::shuffle is not portable
/// bit-for-bit.
template <class T, class Gen>
void deterministic_shuffle(std::vector<T>& v, Gen& g) {
  for (size_t i = v.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(uniform_index(g, i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace deskst
