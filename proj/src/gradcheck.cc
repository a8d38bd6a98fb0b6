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

#include "karlm/gradcheck.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "karlm/random.h"

namespace karlm {
namespace {

double evaluate(const LossBuilder &loss) {
  Tape tape;
  return loss(tape).value()(0, 0);
}

}  // namespace

GradCheckResult check_gradients(ParameterSet &params, const LossBuilder &loss,
                                const GradCheckOptions &options) {
  Gradients analytic(params);
  {
    Tape tape;
    Tensor2 l = loss(tape);
    tape.backward(l, analytic);
  }

  GradCheckResult result;
  Rng rng = substream(options.seed, "gradcheck");
  for (int p = 0; p < params.size(); ++p) {
    Parameter &param = params.at(p);
    if (!param.trainable) continue;
    const int n = static_cast<int>(param.value.size());
    std::vector<int> coords(n);
    std::iota(coords.begin(), coords.end(), 0);
    if (options.max_coords_per_param > 0 && n > options.max_coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_param);
      std::sort(coords.begin(), coords.end());
    }
    for (int c : coords) {
      double &slot = param.value.data()[c];
      const double saved = slot;
      slot = saved + options.epsilon;
      const double plus = evaluate(loss);
      slot = saved - options.epsilon;
      const double minus = evaluate(loss);
      slot = saved;
      const double numeric = (plus - minus) / (2.0 * options.epsilon);
      const double a = analytic[p].data()[c];
      const double denom =
          std::max({std::abs(a), std::abs(numeric), options.floor});
      const double rel = std::abs(a - numeric) / denom;
      ++result.coordinates_checked;
      if (rel > result.max_relative_error || result.worst_coordinate < 0) {
        result.max_relative_error = rel;
        result.worst_parameter = param.name;
        result.worst_coordinate = c;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace karlm
