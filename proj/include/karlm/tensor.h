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

#ifndef KARLM_TENSOR_H_
#define KARLM_TENSOR_H_

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace karlm {

// All activations and parameters are dense row-major 64-bit matrices.
using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Raised when operand shapes are incompatible.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when an API contract is violated (e.g. backward on a non-scalar).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

std::string shape_string(const Matrix &m);
std::string shape_string(int rows, int cols);

// A named model parameter. Frozen parameters (trainable == false) never
// receive gradients.
struct Parameter {
  std::string name;
  Matrix value;
  bool trainable = true;
  int index = -1;
};

// Ordered registry of parameters. Indices are dense and stable.
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet &) = delete;
  ParameterSet &operator=(const ParameterSet &) = delete;
  ParameterSet(ParameterSet &&) = default;
  ParameterSet &operator=(ParameterSet &&) = default;

  Parameter &add(std::string name, Matrix init, bool trainable = true);

  Parameter &get(std::string_view name);
  const Parameter &get(std::string_view name) const;
  Parameter *find(std::string_view name);
  const Parameter *find(std::string_view name) const;

  Parameter &at(int index) { return *params_[index]; }
  const Parameter &at(int index) const { return *params_[index]; }
  int size() const { return static_cast<int>(params_.size()); }

  // Total number of scalar values across all parameters.
  int64_t scalar_count() const;

  // FNV-1a over names, shapes and value bits. Equal checksums mean
  // bitwise-identical parameters.
  uint64_t checksum() const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, int> by_name_;
};

// Gradient accumulator with one slot per parameter, shaped like the
// parameter. Slots of parameters that were not reached stay zero.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const ParameterSet &params);

  void zero();
  Matrix &operator[](int index) { return slots_[index]; }
  const Matrix &operator[](int index) const { return slots_[index]; }
  int size() const { return static_cast<int>(slots_.size()); }

  // this += other, slot by slot.
  void add(const Gradients &other);

 private:
  std::vector<Matrix> slots_;
};

class Tape;

// Handle to a value recorded on a tape.
class Tensor2 {
 public:
  Tensor2() = default;
  Tensor2(Tape *tape, int id) : tape_(tape), id_(id) {}

  int rows() const;
  int cols() const;
  const Matrix &value() const;
  bool requires_grad() const;
  bool valid() const { return tape_ != nullptr; }

  Tape *tape() const { return tape_; }
  int id() const { return id_; }

 private:
  Tape *tape_ = nullptr;
  int id_ = -1;
};

// Reverse-mode tape. Single owner, single thread. Nodes are appended during
// the forward pass and replayed in reverse by backward().
class Tape {
 public:
  using Backward = std::function<void(Tape &, const Matrix &grad_out)>;

  Tape() = default;
  Tape(const Tape &) = delete;
  Tape &operator=(const Tape &) = delete;

  // Restrict gradient flow to parameters whose index is set in `mask`.
  // Parameters outside the mask behave like constants on this tape.
  void set_trainable_mask(std::vector<bool> mask) { mask_ = std::move(mask); }

  Tensor2 constant(Matrix value);
  Tensor2 parameter(const Parameter &param);

  // Appends a node. `backward` is dropped when no input needs a gradient.
  Tensor2 record(Matrix value, std::initializer_list<Tensor2> inputs,
                 Backward backward);
  Tensor2 record(Matrix value, const std::vector<Tensor2> &inputs,
                 Backward backward);

  const Matrix &value(int id) const { return nodes_[id].value; }
  const Matrix &value(Tensor2 t) const { return nodes_[t.id()].value; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }
  bool needs_grad(Tensor2 t) const { return nodes_[t.id()].needs_grad; }

  // Gradient buffer of a node, zero-initialized on first access.
  Matrix &grad(int id);
  Matrix &grad(Tensor2 t) { return grad(t.id()); }

  // Propagates d(loss)/d(node) and adds parameter gradients into `into`.
  // `loss` must be 1x1.
  void backward(Tensor2 loss, Gradients &into);

  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool has_grad = false;
    bool needs_grad = false;
    int param_index = -1;
    Backward backward;
  };

  std::deque<Node> nodes_;
  std::unordered_map<int, int> param_nodes_;
  std::vector<bool> mask_;
};

}  // namespace karlm

#endif  // KARLM_TENSOR_H_
