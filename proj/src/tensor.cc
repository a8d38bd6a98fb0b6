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

#include "karlm/tensor.h"

#include <cstring>

namespace karlm {

std::string shape_string(int rows, int cols) {
  return "(" + std::to_string(rows) + "," + std::to_string(cols) + ")";
}

std::string shape_string(const Matrix &m) {
  return shape_string(static_cast<int>(m.rows()), static_cast<int>(m.cols()));
}

Parameter &ParameterSet::add(std::string name, Matrix init, bool trainable) {
  if (by_name_.count(name) > 0) {
    throw ContractError("duplicate parameter name: " + name);
  }
  auto param = std::make_unique<Parameter>();
  param->name = name;
  param->value = std::move(init);
  param->trainable = trainable;
  param->index = static_cast<int>(params_.size());
  by_name_.emplace(std::move(name), param->index);
  params_.push_back(std::move(param));
  return *params_.back();
}

Parameter *ParameterSet::find(std::string_view name) {
  auto it = by_name_.find(std::string(name));
  return it == by_name_.end() ? nullptr : params_[it->second].get();
}

const Parameter *ParameterSet::find(std::string_view name) const {
  auto it = by_name_.find(std::string(name));
  return it == by_name_.end() ? nullptr : params_[it->second].get();
}

Parameter &ParameterSet::get(std::string_view name) {
  Parameter *p = find(name);
  if (p == nullptr) throw ContractError("unknown parameter: " + std::string(name));
  return *p;
}

const Parameter &ParameterSet::get(std::string_view name) const {
  const Parameter *p = find(name);
  if (p == nullptr) throw ContractError("unknown parameter: " + std::string(name));
  return *p;
}

int64_t ParameterSet::scalar_count() const {
  int64_t total = 0;
  for (const auto &p : params_) total += p->value.size();
  return total;
}

namespace {

constexpr uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr uint64_t kFnvPrime = 1099511628211ULL;

void fnv_bytes(uint64_t &h, const void *data, size_t n) {
  const auto *bytes = static_cast<const unsigned char *>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= kFnvPrime;
  }
}

}  // namespace

uint64_t ParameterSet::checksum() const {
  uint64_t h = kFnvOffset;
  for (const auto &p : params_) {
    fnv_bytes(h, p->name.data(), p->name.size());
    int64_t shape[2] = {p->value.rows(), p->value.cols()};
    fnv_bytes(h, shape, sizeof(shape));
    fnv_bytes(h, p->value.data(), sizeof(double) * p->value.size());
  }
  return h;
}

Gradients::Gradients(const ParameterSet &params) {
  slots_.reserve(params.size());
  for (int i = 0; i < params.size(); ++i) {
    const Matrix &v = params.at(i).value;
    slots_.push_back(Matrix::Zero(v.rows(), v.cols()));
  }
}

void Gradients::zero() {
  for (auto &s : slots_) s.setZero();
}

void Gradients::add(const Gradients &other) {
  if (other.slots_.size() != slots_.size()) {
    throw ContractError("gradient buffers have different parameter counts");
  }
  for (size_t i = 0; i < slots_.size(); ++i) slots_[i] += other.slots_[i];
}

int Tensor2::rows() const { return static_cast<int>(value().rows()); }
int Tensor2::cols() const { return static_cast<int>(value().cols()); }
const Matrix &Tensor2::value() const {
  if (tape_ == nullptr) throw ContractError("use of an empty tensor handle");
  return tape_->value(id_);
}
bool Tensor2::requires_grad() const {
  return tape_ != nullptr && tape_->needs_grad(id_);
}

Tensor2 Tape::constant(Matrix value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Tensor2(this, static_cast<int>(nodes_.size()) - 1);
}

Tensor2 Tape::parameter(const Parameter &param) {
  auto it = param_nodes_.find(param.index);
  if (it != param_nodes_.end()) return Tensor2(this, it->second);
  Node node;
  node.value = param.value;
  node.param_index = param.index;
  bool masked_out = !mask_.empty() &&
                    (param.index >= static_cast<int>(mask_.size()) ||
                     !mask_[param.index]);
  node.needs_grad = param.trainable && !masked_out;
  nodes_.push_back(std::move(node));
  int id = static_cast<int>(nodes_.size()) - 1;
  param_nodes_.emplace(param.index, id);
  return Tensor2(this, id);
}

Tensor2 Tape::record(Matrix value, std::initializer_list<Tensor2> inputs,
                     Backward backward) {
  Node node;
  node.value = std::move(value);
  for (const Tensor2 &in : inputs) {
    if (in.tape() != this) throw ContractError("operands live on different tapes");
    node.needs_grad = node.needs_grad || nodes_[in.id()].needs_grad;
  }
  if (node.needs_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Tensor2(this, static_cast<int>(nodes_.size()) - 1);
}

Tensor2 Tape::record(Matrix value, const std::vector<Tensor2> &inputs,
                     Backward backward) {
  Node node;
  node.value = std::move(value);
  for (const Tensor2 &in : inputs) {
    if (in.tape() != this) throw ContractError("operands live on different tapes");
    node.needs_grad = node.needs_grad || nodes_[in.id()].needs_grad;
  }
  if (node.needs_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Tensor2(this, static_cast<int>(nodes_.size()) - 1);
}

Matrix &Tape::grad(int id) {
  Node &node = nodes_[id];
  if (!node.has_grad) {
    node.grad = Matrix::Zero(node.value.rows(), node.value.cols());
    node.has_grad = true;
  }
  return node.grad;
}

void Tape::backward(Tensor2 loss, Gradients &into) {
  if (loss.tape() != this) throw ContractError("loss recorded on another tape");
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw ContractError("backward requires a scalar loss, got " +
                        shape_string(loss.value()));
  }
  if (!needs_grad(loss)) return;
  grad(loss.id())(0, 0) += 1.0;
  for (int id = loss.id(); id >= 0; --id) {
    Node &node = nodes_[id];
    if (!node.has_grad || !node.needs_grad) continue;
    if (node.param_index >= 0) {
      into[node.param_index] += node.grad;
    } else if (node.backward) {
      node.backward(*this, node.grad);
    }
  }
}

}  // namespace karlm
