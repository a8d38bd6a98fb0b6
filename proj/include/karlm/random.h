// Copyright 2026 The karlm Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef KARLM_RANDOM_H_
#define KARLM_RANDOM_H_

#include <cstdint>
#include <random>
#include <string_view>

#include "karlm/tensor.h"

namespace karlm {

using Rng = std::mt19937_64;

// Derives an independent seed from a root seed, a stream name and up to two
// counters. Every random decision in the library is drawn from such a named
// sub-stream so that reordering or resuming work never shifts other draws.
uint64_t substream_seed(uint64_t root, std::string_view name, uint64_t a = 0,
                        uint64_t b = 0);

inline Rng substream(uint64_t root, std::string_view name, uint64_t a = 0,
                     uint64_t b = 0) {
  return Rng(substream_seed(root, name, a, b));
}

// Uniform double in [0, 1) built from the top 53 bits. Unlike
// std::uniform_real_distribution its output is fixed by the standard engine.
inline double uniform01(Rng &rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n).
inline uint64_t uniform_index(Rng &rng, uint64_t n) {
  return static_cast<uint64_t>(uniform01(rng) * static_cast<double>(n)) % n;
}

// Standard normal via Box-Muller on uniform01.
double normal01(Rng &rng);

Matrix random_normal(int rows, int cols, double stddev, Rng &rng);

}  // namespace karlm

#endif  // KARLM_RANDOM_H_
