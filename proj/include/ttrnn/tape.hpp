// Copyright 2026 The ttrnn Authors. Apache 2.0 License.
//
// Reverse-mode differentiation over the closed op set of ops.hpp.
//
// A Tape records every operation as a node holding its output value and the
// handles of its inputs, so nodes are topologically ordered by construction.
// backward() walks the nodes once in reverse and accumulates adjoints in that
// order; there is no graph optimization and no higher-order support. A tape
// is single use.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ttrnn/ops.hpp"

namespace ttrnn {

enum class OpKind : std::uint8_t {
  kConstant,
  kParam,
  kContract,
  kReshape,
  kPermute,
  kSliceLast,
  kConcatLast,
  kAdd,
  kSub,
  kHadamard,
  kAddBias,
  kScale,
  kAddConst,
  kTanh,
  kSigmoid,
  kRowNormalize,
  kScalarMul,
  kScalarAdd,
  kSoftmaxXent,
  kSum,
};

const char* op_name(OpKind kind);

// Deliberately wrong backward rules, for negative-control tests of gradcheck.
enum class GradFault { kNone, kSigmoid, kTanh, kContract };

void set_grad_fault(GradFault fault);
GradFault grad_fault();

class Tape {
 public:
  struct Var {
    std::uint32_t index = 0;
    bool operator==(const Var&) const = default;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  Var constant(Tensor value);
  // Registers a trainable leaf. Repeated names return the same handle.
  Var param(const std::string& name, const Tensor& value);

  Var contract(Var a, Var b, const Axes& axes_a, const Axes& axes_b);
  Var reshape(Var a, Shape shape);
  Var permute(Var a, const Axes& perm);
  Var slice_last(Var a, std::size_t offset, std::size_t length);
  Var concat_last(std::span<const Var> parts);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var hadamard(Var a, Var b);
  Var add_bias(Var x, Var bias);
  Var scale(Var a, double c);
  Var add_const(Var a, double c);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var row_normalize(Var a);
  Var scalar_mul(Var a, Var s);
  Var scalar_add(Var a, Var s);
  Var softmax_xent(Var logits, std::span<const int> labels, Reduction reduction);
  Var sum(Var a);

  const Tensor& value(Var v) const { return nodes_.at(v.index).value; }
  OpKind kind(Var v) const { return nodes_.at(v.index).kind; }
  std::size_t size() const { return nodes_.size(); }
  // Recorded operations, excluding constant and parameter leaves.
  std::size_t op_count() const;
  std::vector<std::string> param_names() const;

  // Adjoint of <seed, output> with respect to every registered parameter.
  // Parameters that do not influence the output get zero tensors.
  GradMap backward(Var output, const Tensor& seed);
  // Seed 1 for a single-element output.
  GradMap backward(Var output);

 private:
  struct Node {
    OpKind kind;
    std::vector<Var> inputs;
    Tensor value;
    Axes axes_a;
    Axes axes_b;
    std::size_t offset = 0;
    double constant = 0.0;
    Reduction reduction = Reduction::kSum;
    std::vector<int> labels;
    std::vector<double> saved;  // row norms
    Tensor aux;                 // softmax probabilities
    std::string name;
    bool requires_grad = false;
  };

  Var push(Node node);
  void accumulate(std::vector<std::optional<Tensor>>& grads, Var target,
                  Tensor delta) const;

  std::vector<Node> nodes_;
  std::map<std::string, std::uint32_t> params_;
  bool consumed_ = false;
};

class TapeOps {
 public:
  using Value = Tape::Var;

  TapeOps(Tape& tape, const ParamStore* params) : tape_(&tape), params_(params) {}

  Tape& tape() { return *tape_; }
  // References into the tape are invalidated by the next recorded op.
  const Tensor& value(Value v) const { return tape_->value(v); }
  Shape shape(Value v) const { return tape_->value(v).shape(); }

  Value param(const std::string& name) const;
  Value constant(Tensor t) const { return tape_->constant(std::move(t)); }

  Value contract(Value a, Value b, const Axes& axes_a, const Axes& axes_b) const {
    return tape_->contract(a, b, axes_a, axes_b);
  }
  Value reshape(Value a, Shape shape) const {
    return tape_->reshape(a, std::move(shape));
  }
  Value permute(Value a, const Axes& perm) const { return tape_->permute(a, perm); }
  Value slice_last(Value a, std::size_t offset, std::size_t length) const {
    return tape_->slice_last(a, offset, length);
  }
  Value concat_last(std::span<const Value> parts) const {
    return tape_->concat_last(parts);
  }
  Value add(Value a, Value b) const { return tape_->add(a, b); }
  Value sub(Value a, Value b) const { return tape_->sub(a, b); }
  Value hadamard(Value a, Value b) const { return tape_->hadamard(a, b); }
  Value add_bias(Value x, Value b) const { return tape_->add_bias(x, b); }
  Value scale(Value a, double c) const { return tape_->scale(a, c); }
  Value add_const(Value a, double c) const { return tape_->add_const(a, c); }
  Value tanh(Value a) const { return tape_->tanh(a); }
  Value sigmoid(Value a) const { return tape_->sigmoid(a); }
  Value row_normalize(Value a) const { return tape_->row_normalize(a); }
  Value scalar_mul(Value a, Value s) const { return tape_->scalar_mul(a, s); }
  Value scalar_add(Value a, Value s) const { return tape_->scalar_add(a, s); }
  Value softmax_xent(Value logits, std::span<const int> labels,
                     Reduction reduction) const {
    return tape_->softmax_xent(logits, labels, reduction);
  }
  Value sum(Value a) const { return tape_->sum(a); }

 private:
  Tape* tape_;
  const ParamStore* params_;
};

// Global L2 norm over all tensors of a gradient map.
double global_norm(const GradMap& grads);

struct GradcheckOptions {
  double eps = 1e-5;
  std::size_t max_coords = 200;
  std::uint64_t seed = 0;
};

struct GradcheckReport {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Builds a scalar loss on the given ops from the parameters it was bound to.
using LossBuilder = std::function<Tape::Var(TapeOps&)>;

// Compares backward() with central differences (f(p+eps) - f(p-eps)) / 2eps on
// up to max_coords coordinates drawn deterministically from all parameters.
// Relative error per coordinate is |a - n| / max(|a|, |n|, 1e-8).
GradcheckReport gradcheck(const LossBuilder& loss, ParamStore& params,
                          const GradcheckOptions& options = {});

}  // namespace ttrnn
