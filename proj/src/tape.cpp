// Copyright 2026 The ttrnn Authors. Apache 2.0 License.

#include "ttrnn/tape.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include "ttrnn/random.hpp"

namespace ttrnn {
namespace {

std::atomic<GradFault> g_fault{GradFault::kNone};

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

Axes free_axes(std::size_t rank, const Axes& paired) {
  Axes out;
  for (std::size_t ax = 0; ax < rank; ++ax) {
    if (std::find(paired.begin(), paired.end(), ax) == paired.end()) {
      out.push_back(ax);
    }
  }
  return out;
}

std::size_t position_of(const Axes& axes, std::size_t value) {
  return static_cast<std::size_t>(
      std::find(axes.begin(), axes.end(), value) - axes.begin());
}

}  // namespace

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kConstant: return "constant";
    case OpKind::kParam: return "param";
    case OpKind::kContract: return "contract";
    case OpKind::kReshape: return "reshape";
    case OpKind::kPermute: return "permute";
    case OpKind::kSliceLast: return "slice";
    case OpKind::kConcatLast: return "concat";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kHadamard: return "hadamard";
    case OpKind::kAddBias: return "add_bias";
    case OpKind::kScale: return "scale";
    case OpKind::kAddConst: return "add_const";
    case OpKind::kTanh: return "tanh";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kRowNormalize: return "row_normalize";
    case OpKind::kScalarMul: return "scalar_mul";
    case OpKind::kScalarAdd: return "scalar_add";
    case OpKind::kSoftmaxXent: return "softmax_xent";
    case OpKind::kSum: return "sum";
  }
  return "?";
}

void set_grad_fault(GradFault fault) { g_fault.store(fault); }
GradFault grad_fault() { return g_fault.load(); }

Tape::Var Tape::push(Node node) {
  if (consumed_) throw StateError("tape already consumed by backward()");
  node.requires_grad = node.kind == OpKind::kParam;
  for (Var in : node.inputs) {
    node.requires_grad = node.requires_grad || nodes_[in.index].requires_grad;
  }
  nodes_.push_back(std::move(node));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Tape::Var Tape::constant(Tensor value) {
  Node n{.kind = OpKind::kConstant};
  n.value = std::move(value);
  return push(std::move(n));
}

Tape::Var Tape::param(const std::string& name, const Tensor& value) {
  if (auto it = params_.find(name); it != params_.end()) {
    return Var{it->second};
  }
  Node n{.kind = OpKind::kParam};
  n.value = value;
  n.name = name;
  Var v = push(std::move(n));
  params_.emplace(name, v.index);
  return v;
}

Tape::Var Tape::contract(Var a, Var b, const Axes& axes_a, const Axes& axes_b) {
  Node n{.kind = OpKind::kContract, .inputs = {a, b}};
  n.value = ttrnn::contract(value(a), value(b), axes_a, axes_b);
  n.axes_a = axes_a;
  n.axes_b = axes_b;
  return push(std::move(n));
}

Tape::Var Tape::reshape(Var a, Shape shape) {
  Node n{.kind = OpKind::kReshape, .inputs = {a}};
  n.value = value(a).reshaped(std::move(shape));
  return push(std::move(n));
}

Tape::Var Tape::permute(Var a, const Axes& perm) {
  Node n{.kind = OpKind::kPermute, .inputs = {a}};
  n.value = ttrnn::permute(value(a), perm);
  n.axes_a = perm;
  return push(std::move(n));
}

Tape::Var Tape::slice_last(Var a, std::size_t offset, std::size_t length) {
  Node n{.kind = OpKind::kSliceLast, .inputs = {a}};
  n.value = kernels::slice_last(value(a), offset, length);
  n.offset = offset;
  return push(std::move(n));
}

Tape::Var Tape::concat_last(std::span<const Var> parts) {
  Node n{.kind = OpKind::kConcatLast};
  std::vector<const Tensor*> ptrs;
  for (Var p : parts) {
    n.inputs.push_back(p);
    ptrs.push_back(&value(p));
  }
  n.value = kernels::concat_last(ptrs);
  return push(std::move(n));
}

Tape::Var Tape::add(Var a, Var b) {
  Node n{.kind = OpKind::kAdd, .inputs = {a, b}};
  n.value = ttrnn::add(value(a), value(b));
  return push(std::move(n));
}

Tape::Var Tape::sub(Var a, Var b) {
  Node n{.kind = OpKind::kSub, .inputs = {a, b}};
  n.value = ttrnn::sub(value(a), value(b));
  return push(std::move(n));
}

Tape::Var Tape::hadamard(Var a, Var b) {
  Node n{.kind = OpKind::kHadamard, .inputs = {a, b}};
  n.value = ttrnn::hadamard(value(a), value(b));
  return push(std::move(n));
}

Tape::Var Tape::add_bias(Var x, Var bias) {
  Node n{.kind = OpKind::kAddBias, .inputs = {x, bias}};
  n.value = kernels::add_bias(value(x), value(bias));
  return push(std::move(n));
}

Tape::Var Tape::scale(Var a, double c) {
  Node n{.kind = OpKind::kScale, .inputs = {a}};
  n.value = ttrnn::scale(value(a), c);
  n.constant = c;
  return push(std::move(n));
}

Tape::Var Tape::add_const(Var a, double c) {
  Node n{.kind = OpKind::kAddConst, .inputs = {a}};
  n.value = ttrnn::add_const(value(a), c);
  n.constant = c;
  return push(std::move(n));
}

Tape::Var Tape::tanh(Var a) {
  Node n{.kind = OpKind::kTanh, .inputs = {a}};
  n.value = ttrnn::tanh(value(a));
  return push(std::move(n));
}

Tape::Var Tape::sigmoid(Var a) {
  Node n{.kind = OpKind::kSigmoid, .inputs = {a}};
  n.value = ttrnn::sigmoid(value(a));
  return push(std::move(n));
}

Tape::Var Tape::row_normalize(Var a) {
  Node n{.kind = OpKind::kRowNormalize, .inputs = {a}};
  n.value = kernels::row_normalize(value(a), &n.saved);
  return push(std::move(n));
}

Tape::Var Tape::scalar_mul(Var a, Var s) {
  Node n{.kind = OpKind::kScalarMul, .inputs = {a, s}};
  n.value = kernels::scalar_mul(value(a), value(s));
  return push(std::move(n));
}

Tape::Var Tape::scalar_add(Var a, Var s) {
  Node n{.kind = OpKind::kScalarAdd, .inputs = {a, s}};
  n.value = kernels::scalar_add(value(a), value(s));
  return push(std::move(n));
}

Tape::Var Tape::softmax_xent(Var logits, std::span<const int> labels,
                             Reduction reduction) {
  Node n{.kind = OpKind::kSoftmaxXent, .inputs = {logits}};
  n.value = kernels::softmax_xent(value(logits), labels, reduction, &n.aux);
  n.labels.assign(labels.begin(), labels.end());
  n.reduction = reduction;
  return push(std::move(n));
}

Tape::Var Tape::sum(Var a) {
  Node n{.kind = OpKind::kSum, .inputs = {a}};
  n.value = kernels::sum_all(value(a));
  return push(std::move(n));
}

std::size_t Tape::op_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) {
        return n.kind != OpKind::kConstant && n.kind != OpKind::kParam;
      }));
}

std::vector<std::string> Tape::param_names() const {
  std::vector<std::string> names;
  for (const auto& [name, index] : params_) names.push_back(name);
  return names;
}

void Tape::accumulate(std::vector<std::optional<Tensor>>& grads, Var target,
                      Tensor delta) const {
  if (!nodes_[target.index].requires_grad) return;
  auto& slot = grads[target.index];
  if (!slot) {
    slot = std::move(delta);
  } else {
    auto dst = slot->data();
    auto src = delta.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
}

GradMap Tape::backward(Var output) {
  if (value(output).size() != 1) {
    throw ShapeError("backward without a seed needs a one-element output");
  }
  return backward(output, Tensor(value(output).shape(), {1.0}));
}

GradMap Tape::backward(Var output, const Tensor& seed) {
  if (consumed_) throw StateError("tape already consumed by backward()");
  if (output.index >= nodes_.size()) throw StateError("unknown output handle");
  check_same_shape(seed, value(output), "backward seed");
  consumed_ = true;

  const GradFault fault = grad_fault();
  std::vector<std::optional<Tensor>> grads(nodes_.size());
  grads[output.index] = seed;

  for (std::size_t idx = output.index + 1; idx-- > 0;) {
    if (!grads[idx]) continue;
    const Node& node = nodes_[idx];
    const Tensor& g = *grads[idx];
    switch (node.kind) {
      case OpKind::kConstant:
      case OpKind::kParam:
        break;
      case OpKind::kContract: {
        const Tensor& a = value(node.inputs[0]);
        const Tensor& b = value(node.inputs[1]);
        const Axes free_a = free_axes(a.rank(), node.axes_a);
        const Axes free_b = free_axes(b.rank(), node.axes_b);
        const std::size_t fa = free_a.size();
        // dA: contract dC's trailing (free_b) axes with b's free axes. The
        // result is [free_a..., sorted(axes_b)...] in terms of a's axes.
        {
          Axes c_axes;
          for (std::size_t q = 0; q < free_b.size(); ++q) c_axes.push_back(fa + q);
          Tensor r = ttrnn::contract(g, b, c_axes, free_b);
          Axes sorted_b = node.axes_b;
          std::sort(sorted_b.begin(), sorted_b.end());
          Axes layout = free_a;
          for (std::size_t ax : sorted_b) {
            layout.push_back(node.axes_a[position_of(node.axes_b, ax)]);
          }
          Tensor da = ttrnn::permute(r, kernels::inverse_permutation(layout));
          if (fault == GradFault::kContract) da = ttrnn::scale(da, 1.5);
          accumulate(grads, node.inputs[0], std::move(da));
        }
        {
          Axes c_axes;
          for (std::size_t q = 0; q < fa; ++q) c_axes.push_back(q);
          Tensor r = ttrnn::contract(a, g, free_a, c_axes);
          Axes sorted_a = node.axes_a;
          std::sort(sorted_a.begin(), sorted_a.end());
          Axes layout;
          for (std::size_t ax : sorted_a) {
            layout.push_back(node.axes_b[position_of(node.axes_a, ax)]);
          }
          layout.insert(layout.end(), free_b.begin(), free_b.end());
          accumulate(grads, node.inputs[1],
                     ttrnn::permute(r, kernels::inverse_permutation(layout)));
        }
        break;
      }
      case OpKind::kReshape:
        accumulate(grads, node.inputs[0],
                   g.reshaped(value(node.inputs[0]).shape()));
        break;
      case OpKind::kPermute:
        accumulate(grads, node.inputs[0],
                   ttrnn::permute(g, kernels::inverse_permutation(node.axes_a)));
        break;
      case OpKind::kSliceLast: {
        const Tensor& x = value(node.inputs[0]);
        Tensor dx(x.shape());
        const std::size_t cols = x.shape().back();
        const std::size_t len = g.shape().back();
        const std::size_t rows = x.size() / cols;
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < len; ++c) {
            dx[r * cols + node.offset + c] = g[r * len + c];
          }
        }
        accumulate(grads, node.inputs[0], std::move(dx));
        break;
      }
      case OpKind::kConcatLast: {
        const std::size_t total = g.shape().back();
        const std::size_t rows = g.size() / total;
        std::size_t col = 0;
        for (Var in : node.inputs) {
          Tensor part(value(in).shape());
          const std::size_t w = part.shape().back();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < w; ++c) {
              part[r * w + c] = g[r * total + col + c];
            }
          }
          col += w;
          accumulate(grads, in, std::move(part));
        }
        break;
      }
      case OpKind::kAdd:
        accumulate(grads, node.inputs[0], g);
        accumulate(grads, node.inputs[1], g);
        break;
      case OpKind::kSub:
        accumulate(grads, node.inputs[0], g);
        accumulate(grads, node.inputs[1], ttrnn::scale(g, -1.0));
        break;
      case OpKind::kHadamard:
        accumulate(grads, node.inputs[0],
                   ttrnn::hadamard(g, value(node.inputs[1])));
        accumulate(grads, node.inputs[1],
                   ttrnn::hadamard(g, value(node.inputs[0])));
        break;
      case OpKind::kAddBias: {
        const std::size_t n = value(node.inputs[1]).size();
        Tensor db(Shape{n});
        for (std::size_t i = 0; i < g.size(); ++i) db[i % n] += g[i];
        accumulate(grads, node.inputs[0], g);
        accumulate(grads, node.inputs[1], std::move(db));
        break;
      }
      case OpKind::kScale:
        accumulate(grads, node.inputs[0], ttrnn::scale(g, node.constant));
        break;
      case OpKind::kAddConst:
        accumulate(grads, node.inputs[0], g);
        break;
      case OpKind::kTanh: {
        Tensor dx = g;
        auto y = node.value.data();
        for (std::size_t i = 0; i < dx.size(); ++i) {
          dx[i] *= fault == GradFault::kTanh ? 1.0 - y[i] : 1.0 - y[i] * y[i];
        }
        accumulate(grads, node.inputs[0], std::move(dx));
        break;
      }
      case OpKind::kSigmoid: {
        Tensor dx = g;
        auto y = node.value.data();
        for (std::size_t i = 0; i < dx.size(); ++i) {
          dx[i] *= fault == GradFault::kSigmoid ? y[i] : y[i] * (1.0 - y[i]);
        }
        accumulate(grads, node.inputs[0], std::move(dx));
        break;
      }
      case OpKind::kRowNormalize: {
        const std::size_t rows = node.value.dim(0);
        const std::size_t cols = node.value.dim(1);
        Tensor dx(node.value.shape());
        for (std::size_t r = 0; r < rows; ++r) {
          double dot = 0.0;
          for (std::size_t c = 0; c < cols; ++c) {
            dot += node.value[r * cols + c] * g[r * cols + c];
          }
          for (std::size_t c = 0; c < cols; ++c) {
            dx[r * cols + c] =
                (g[r * cols + c] - node.value[r * cols + c] * dot) / node.saved[r];
          }
        }
        accumulate(grads, node.inputs[0], std::move(dx));
        break;
      }
      case OpKind::kScalarMul: {
        const Tensor& a = value(node.inputs[0]);
        const Tensor& s = value(node.inputs[1]);
        double ds = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) ds += g[i] * a[i];
        accumulate(grads, node.inputs[0], ttrnn::scale(g, s[0]));
        accumulate(grads, node.inputs[1], Tensor(s.shape(), {ds}));
        break;
      }
      case OpKind::kScalarAdd: {
        const Tensor& s = value(node.inputs[1]);
        accumulate(grads, node.inputs[0], g);
        accumulate(grads, node.inputs[1], Tensor(s.shape(), {ttrnn::sum(g)}));
        break;
      }
      case OpKind::kSoftmaxXent: {
        Tensor dz = node.aux;
        const std::size_t rows = dz.dim(0);
        const std::size_t k = dz.dim(1);
        double factor = g[0];
        if (node.reduction == Reduction::kMean) factor /= static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r) {
          dz[r * k + static_cast<std::size_t>(node.labels[r])] -= 1.0;
        }
        accumulate(grads, node.inputs[0], ttrnn::scale(dz, factor));
        break;
      }
      case OpKind::kSum:
        accumulate(grads, node.inputs[0],
                   Tensor::full(value(node.inputs[0]).shape(), g[0]));
        break;
    }
  }

  GradMap out;
  for (const auto& [name, index] : params_) {
    if (grads[index]) {
      out.emplace(name, std::move(*grads[index]));
    } else {
      out.emplace(name, Tensor(nodes_[index].value.shape()));
    }
  }
  return out;
}

TapeOps::Value TapeOps::param(const std::string& name) const {
  if (params_ == nullptr) throw StateError("TapeOps has no parameter store");
  auto it = params_->find(name);
  if (it == params_->end()) throw StateError("unknown parameter '" + name + "'");
  return tape_->param(name, it->second);
}

double global_norm(const GradMap& grads) {
  double s = 0.0;
  for (const auto& [name, g] : grads) {
    for (double v : g.data()) s += v * v;
  }
  return std::sqrt(s);
}

GradcheckReport gradcheck(const LossBuilder& loss, ParamStore& params,
                          const GradcheckOptions& options) {
  GradMap analytic;
  {
    Tape tape;
    TapeOps ops(tape, &params);
    Tape::Var out = loss(ops);
    if (!std::isfinite(tape.value(out)[0])) {
      throw NumericError("gradcheck: loss is not finite");
    }
    analytic = tape.backward(out);
  }

  auto evaluate = [&]() {
    Tape tape;
    TapeOps ops(tape, &params);
    const double v = tape.value(loss(ops))[0];
    if (!std::isfinite(v)) throw NumericError("gradcheck: loss is not finite");
    return v;
  };

  struct Coord {
    std::string name;
    std::size_t index;
  };
  std::vector<Coord> coords;
  for (const auto& [name, grad] : analytic) {
    for (std::size_t i = 0; i < grad.size(); ++i) coords.push_back({name, i});
  }
  if (coords.size() > options.max_coords) {
    Rng rng(options.seed);
    // Partial Fisher-Yates: the first max_coords entries become the sample.
    for (std::size_t i = 0; i < options.max_coords; ++i) {
      std::swap(coords[i], coords[i + rng.index(coords.size() - i)]);
    }
    coords.resize(options.max_coords);
  }

  GradcheckReport report;
  for (const Coord& c : coords) {
    double& p = params.at(c.name)[c.index];
    const double saved = p;
    p = saved + options.eps;
    const double up = evaluate();
    p = saved - options.eps;
    const double down = evaluate();
    p = saved;
    const double numeric = (up - down) / (2.0 * options.eps);
    const double a = analytic.at(c.name)[c.index];
    if (!std::isfinite(a)) throw NumericError("gradcheck: non-finite gradient");
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    const double rel = std::abs(a - numeric) / denom;
    ++report.coords_checked;
    if (report.coords_checked == 1 || rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_param = c.name;
      report.worst_index = c.index;
      report.worst_analytic = a;
      report.worst_numeric = numeric;
    }
  }
  return report;
}

}  // namespace ttrnn
