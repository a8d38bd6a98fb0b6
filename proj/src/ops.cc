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

#include "karlm/ops.h"

#include <cmath>
#include <numbers>

namespace karlm {
namespace {

Tape &same_tape(Tensor2 a, Tensor2 b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) {
    throw ContractError("operands live on different tapes");
  }
  return *a.tape();
}

void require_same_shape(const char *op, Tensor2 a, Tensor2 b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_string(a.value()) + " vs " +
                         shape_string(b.value()));
  }
}

}  // namespace

Tensor2 matmul(Tensor2 a, Tensor2 b) {
  Tape &t = same_tape(a, b);
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + shape_string(a.value()) + " x " +
                         shape_string(b.value()));
  }
  Matrix out = a.value() * b.value();
  return t.record(std::move(out), {a, b}, [a, b](Tape &t, const Matrix &g) {
    if (t.needs_grad(a)) t.grad(a).noalias() += g * t.value(b).transpose();
    if (t.needs_grad(b)) t.grad(b).noalias() += t.value(a).transpose() * g;
  });
}

Tensor2 matmul_nt(Tensor2 a, Tensor2 b) {
  Tape &t = same_tape(a, b);
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: " + shape_string(a.value()) + " x " +
                         shape_string(b.value()) + "^T");
  }
  Matrix out = a.value() * b.value().transpose();
  return t.record(std::move(out), {a, b}, [a, b](Tape &t, const Matrix &g) {
    if (t.needs_grad(a)) t.grad(a).noalias() += g * t.value(b);
    if (t.needs_grad(b)) t.grad(b).noalias() += g.transpose() * t.value(a);
  });
}

Tensor2 transpose(Tensor2 a) {
  Tape &t = *a.tape();
  Matrix out = a.value().transpose();
  return t.record(std::move(out), {a}, [a](Tape &t, const Matrix &g) {
    t.grad(a) += g.transpose();
  });
}

Tensor2 add(Tensor2 a, Tensor2 b) {
  Tape &t = same_tape(a, b);
  require_same_shape("add", a, b);
  Matrix out = a.value() + b.value();
  return t.record(std::move(out), {a, b}, [a, b](Tape &t, const Matrix &g) {
    if (t.needs_grad(a)) t.grad(a) += g;
    if (t.needs_grad(b)) t.grad(b) += g;
  });
}

Tensor2 sub(Tensor2 a, Tensor2 b) {
  Tape &t = same_tape(a, b);
  require_same_shape("sub", a, b);
  Matrix out = a.value() - b.value();
  return t.record(std::move(out), {a, b}, [a, b](Tape &t, const Matrix &g) {
    if (t.needs_grad(a)) t.grad(a) += g;
    if (t.needs_grad(b)) t.grad(b) -= g;
  });
}

Tensor2 hadamard(Tensor2 a, Tensor2 b) {
  Tape &t = same_tape(a, b);
  require_same_shape("hadamard", a, b);
  Matrix out = a.value().cwiseProduct(b.value());
  return t.record(std::move(out), {a, b}, [a, b](Tape &t, const Matrix &g) {
    if (t.needs_grad(a)) t.grad(a) += g.cwiseProduct(t.value(b));
    if (t.needs_grad(b)) t.grad(b) += g.cwiseProduct(t.value(a));
  });
}

Tensor2 scale(Tensor2 a, double factor) {
  Tape &t = *a.tape();
  Matrix out = a.value() * factor;
  return t.record(std::move(out), {a}, [a, factor](Tape &t, const Matrix &g) {
    t.grad(a) += g * factor;
  });
}

Tensor2 add_row(Tensor2 a, Tensor2 row) {
  Tape &t = same_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw DimensionError("add_row: " + shape_string(a.value()) + " + row " +
                         shape_string(row.value()));
  }
  Matrix out = a.value().rowwise() + row.value().row(0);
  return t.record(std::move(out), {a, row},
                  [a, row](Tape &t, const Matrix &g) {
                    if (t.needs_grad(a)) t.grad(a) += g;
                    if (t.needs_grad(row)) t.grad(row) += g.colwise().sum();
                  });
}

Tensor2 relu(Tensor2 a) {
  Tape &t = *a.tape();
  Matrix out = a.value().cwiseMax(0.0);
  return t.record(std::move(out), {a}, [a](Tape &t, const Matrix &g) {
    const Matrix &x = t.value(a);
    t.grad(a) += (x.array() > 0.0).select(g, 0.0);
  });
}

Tensor2 gelu(Tensor2 a) {
  Tape &t = *a.tape();
  const Matrix &x = a.value();
  Matrix out = x.unaryExpr([](double v) {
    return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
  });
  return t.record(std::move(out), {a}, [a](Tape &t, const Matrix &g) {
    const Matrix &x = t.value(a);
    Matrix d = x.unaryExpr([](double v) {
      double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      double pdf = std::exp(-0.5 * v * v) * std::numbers::inv_sqrtpi /
                   std::numbers::sqrt2;
      return cdf + v * pdf;
    });
    t.grad(a) += g.cwiseProduct(d);
  });
}

Tensor2 sigmoid(Tensor2 a) {
  Tape &t = *a.tape();
  Matrix out = a.value().unaryExpr([](double v) {
    return v >= 0 ? 1.0 / (1.0 + std::exp(-v))
                  : std::exp(v) / (1.0 + std::exp(v));
  });
  Tensor2 result;
  int out_id = t.size();
  result = t.record(std::move(out), {a}, [a, out_id](Tape &t, const Matrix &g) {
    const Matrix &y = t.value(out_id);
    t.grad(a) += g.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix()));
  });
  return result;
}

namespace {

Matrix softmax_values(const Matrix &x) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double m = x.row(r).maxCoeff();
    double z = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      out(r, c) = std::exp(x(r, c) - m);
      z += out(r, c);
    }
    out.row(r) /= z;
  }
  return out;
}

}  // namespace

Tensor2 softmax_rows(Tensor2 x) {
  Tape &t = *x.tape();
  int out_id = t.size();
  return t.record(softmax_values(x.value()), {x},
                  [x, out_id](Tape &t, const Matrix &g) {
                    const Matrix &y = t.value(out_id);
                    Eigen::VectorXd dots = g.cwiseProduct(y).rowwise().sum();
                    Matrix d = g;
                    d.colwise() -= dots;
                    t.grad(x) += y.cwiseProduct(d);
                  });
}

Tensor2 log_softmax_rows(Tensor2 x) {
  Tape &t = *x.tape();
  const Matrix &v = x.value();
  Matrix out(v.rows(), v.cols());
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    double m = v.row(r).maxCoeff();
    double z = (v.row(r).array() - m).exp().sum();
    out.row(r) = v.row(r).array() - m - std::log(z);
  }
  int out_id = t.size();
  return t.record(std::move(out), {x}, [x, out_id](Tape &t, const Matrix &g) {
    Matrix p = t.value(out_id).array().exp();
    Eigen::VectorXd gs = g.rowwise().sum();
    Matrix d = g;
    for (Eigen::Index r = 0; r < d.rows(); ++r) d.row(r) -= gs(r) * p.row(r);
    t.grad(x) += d;
  });
}

Tensor2 layer_norm(Tensor2 x, Tensor2 gain, Tensor2 bias, double eps) {
  Tape &t = same_tape(x, gain);
  same_tape(x, bias);
  const int n = x.rows();
  const int d = x.cols();
  if (gain.rows() != 1 || gain.cols() != d || bias.rows() != 1 ||
      bias.cols() != d) {
    throw DimensionError("layer_norm: input " + shape_string(x.value()) +
                         " gain " + shape_string(gain.value()) + " bias " +
                         shape_string(bias.value()));
  }
  const Matrix &v = x.value();
  Matrix xhat(n, d);
  Eigen::VectorXd inv_std(n);
  for (int r = 0; r < n; ++r) {
    double mean = v.row(r).mean();
    double var = (v.row(r).array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (v.row(r).array() - mean) * inv_std(r);
  }
  Matrix out = xhat.array().rowwise() * gain.value().row(0).array();
  out.rowwise() += bias.value().row(0);
  return t.record(
      std::move(out), {x, gain, bias},
      [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          Tape &t, const Matrix &g) {
        if (t.needs_grad(gain)) {
          t.grad(gain) += g.cwiseProduct(xhat).colwise().sum();
        }
        if (t.needs_grad(bias)) t.grad(bias) += g.colwise().sum();
        if (t.needs_grad(x)) {
          Matrix dxhat = g.array().rowwise() * t.value(gain).row(0).array();
          const double d = static_cast<double>(dxhat.cols());
          Matrix &gx = t.grad(x);
          for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
            double mean_d = dxhat.row(r).sum() / d;
            double mean_dx = dxhat.row(r).dot(xhat.row(r)) / d;
            gx.row(r) += inv_std(r) * (dxhat.row(r).array() - mean_d -
                                       xhat.row(r).array() * mean_dx)
                                          .matrix();
          }
        }
      });
}

Tensor2 slice_rows(Tensor2 a, int start, int count) {
  Tape &t = *a.tape();
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw DimensionError("slice_rows: [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") of " +
                         shape_string(a.value()));
  }
  Matrix out = a.value().middleRows(start, count);
  return t.record(std::move(out), {a},
                  [a, start, count](Tape &t, const Matrix &g) {
                    t.grad(a).middleRows(start, count) += g;
                  });
}

Tensor2 slice_cols(Tensor2 a, int start, int count) {
  Tape &t = *a.tape();
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw DimensionError("slice_cols: [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") of " +
                         shape_string(a.value()));
  }
  Matrix out = a.value().middleCols(start, count);
  return t.record(std::move(out), {a},
                  [a, start, count](Tape &t, const Matrix &g) {
                    t.grad(a).middleCols(start, count) += g;
                  });
}

Tensor2 concat_rows(const std::vector<Tensor2> &parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no operands");
  Tape &t = *parts[0].tape();
  const int cols = parts[0].cols();
  int rows = 0;
  for (const Tensor2 &p : parts) {
    if (p.cols() != cols) {
      throw DimensionError("concat_rows: column mismatch " +
                           shape_string(parts[0].value()) + " vs " +
                           shape_string(p.value()));
    }
    rows += p.rows();
  }
  Matrix out(rows, cols);
  int offset = 0;
  for (const Tensor2 &p : parts) {
    out.middleRows(offset, p.rows()) = p.value();
    offset += p.rows();
  }
  return t.record(std::move(out), parts, [parts](Tape &t, const Matrix &g) {
    int offset = 0;
    for (const Tensor2 &p : parts) {
      int r = p.rows();
      if (t.needs_grad(p)) t.grad(p) += g.middleRows(offset, r);
      offset += r;
    }
  });
}

Tensor2 concat_cols(const std::vector<Tensor2> &parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no operands");
  Tape &t = *parts[0].tape();
  const int rows = parts[0].rows();
  int cols = 0;
  for (const Tensor2 &p : parts) {
    if (p.rows() != rows) {
      throw DimensionError("concat_cols: row mismatch " +
                           shape_string(parts[0].value()) + " vs " +
                           shape_string(p.value()));
    }
    cols += p.cols();
  }
  Matrix out(rows, cols);
  int offset = 0;
  for (const Tensor2 &p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  return t.record(std::move(out), parts, [parts](Tape &t, const Matrix &g) {
    int offset = 0;
    for (const Tensor2 &p : parts) {
      int c = p.cols();
      if (t.needs_grad(p)) t.grad(p) += g.middleCols(offset, c);
      offset += c;
    }
  });
}

Tensor2 gather_rows(Tensor2 a, std::span<const int> rows) {
  Tape &t = *a.tape();
  Matrix out(static_cast<Eigen::Index>(rows.size()), a.cols());
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= a.rows()) {
      throw DimensionError("gather_rows: row " + std::to_string(rows[i]) +
                           " out of range for " + shape_string(a.value()));
    }
    out.row(static_cast<Eigen::Index>(i)) = a.value().row(rows[i]);
  }
  std::vector<int> idx(rows.begin(), rows.end());
  return t.record(std::move(out), {a},
                  [a, idx = std::move(idx)](Tape &t, const Matrix &g) {
                    Matrix &ga = t.grad(a);
                    for (size_t i = 0; i < idx.size(); ++i) {
                      ga.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
                    }
                  });
}

Tensor2 sum(Tensor2 a) {
  Tape &t = *a.tape();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return t.record(std::move(out), {a}, [a](Tape &t, const Matrix &g) {
    t.grad(a).array() += g(0, 0);
  });
}

Tensor2 pick(Tensor2 a, std::span<const std::pair<int, int>> cells) {
  Tape &t = *a.tape();
  Matrix out(static_cast<Eigen::Index>(cells.size()), 1);
  for (size_t i = 0; i < cells.size(); ++i) {
    auto [r, c] = cells[i];
    if (r < 0 || r >= a.rows() || c < 0 || c >= a.cols()) {
      throw DimensionError("pick: cell (" + std::to_string(r) + "," +
                           std::to_string(c) + ") out of range for " +
                           shape_string(a.value()));
    }
    out(static_cast<Eigen::Index>(i), 0) = a.value()(r, c);
  }
  std::vector<std::pair<int, int>> where(cells.begin(), cells.end());
  return t.record(std::move(out), {a},
                  [a, where = std::move(where)](Tape &t, const Matrix &g) {
                    Matrix &ga = t.grad(a);
                    for (size_t i = 0; i < where.size(); ++i) {
                      ga(where[i].first, where[i].second) +=
                          g(static_cast<Eigen::Index>(i), 0);
                    }
                  });
}

}  // namespace karlm
