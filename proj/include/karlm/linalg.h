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

#ifndef KARLM_LINALG_H_
#define KARLM_LINALG_H_

#include <stdexcept>

#include "karlm/tensor.h"

namespace karlm {

class SingularityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Moore-Penrose pseudoinverse of a full-column-rank matrix. Rank is decided
// from the singular values: sigma_min <= tol * sigma_max is rank-deficient.
Matrix pseudoinverse(const Matrix &w, double tol = 1e-10);

// Largest |w * pinv * w - w| entry, the first Penrose condition.
double penrose_residual(const Matrix &w, const Matrix &pinv);

}  // namespace karlm

#endif  // KARLM_LINALG_H_
