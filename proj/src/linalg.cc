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

#include "karlm/linalg.h"

#include <Eigen/SVD>

namespace karlm {

Matrix pseudoinverse(const Matrix &w, double tol) {
  if (w.rows() == 0 || w.cols() == 0 || w.rows() < w.cols()) {
    throw SingularityError("pseudoinverse: " + shape_string(w) +
                           " cannot have full column rank");
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(w, Eigen::ComputeThinU |
                                               Eigen::ComputeThinV);
  const Eigen::VectorXd &sigma = svd.singularValues();
  const double largest = sigma(0);
  const double smallest = sigma(sigma.size() - 1);
  if (!(largest > 0.0) || smallest <= tol * largest) {
    throw SingularityError("pseudoinverse: rank-deficient " + shape_string(w) +
                           " (sigma_min/sigma_max = " +
                           std::to_string(largest > 0 ? smallest / largest : 0.0) +
                           ")");
  }
  Eigen::MatrixXd pinv = svd.matrixV() * sigma.cwiseInverse().asDiagonal() *
                         svd.matrixU().transpose();
  return pinv;
}

double penrose_residual(const Matrix &w, const Matrix &pinv) {
  return (w * pinv * w - w).cwiseAbs().maxCoeff();
}

}  // namespace karlm
