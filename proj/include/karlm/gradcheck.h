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

#ifndef KARLM_GRADCHECK_H_
#define KARLM_GRADCHECK_H_

#include <functional>
#include <string>

#include "karlm/tensor.h"

namespace karlm {

struct GradCheckOptions {
  double epsilon = 1e-4;
  // Relative error is |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
  // 0 checks every coordinate.
  int max_coords_per_param = 0;
  uint64_t seed = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  int worst_coordinate = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  int64_t coordinates_checked = 0;
};

// Builds the loss on a fresh tape. Called once for the analytic gradient and
// twice per checked coordinate.
using LossBuilder = std::function<Tensor2(Tape &)>;

// Central finite-difference check of every trainable parameter in `params`.
// Parameter values are restored before returning.
GradCheckResult check_gradients(ParameterSet &params, const LossBuilder &loss,
                                const GradCheckOptions &options = {});

}  // namespace karlm

#endif  // KARLM_GRADCHECK_H_
