// Copyright 2026 The ttrnn Authors. Apache 2.0 License.
//
// Gated recurrent cells in three parameterizations:
//   dense     W [gD, M], U [gD, D]
//   separate  one TT matrix per gate for each of W and U
//   fused     W and U each a single gate-stacked TT matrix
//
// Gate order is fixed: LSTM (c, u, f, o), GRU (h, u, r). Gate i occupies
// rows [i*D, (i+1)*D) of every stacked matrix and bias.
//
// LSTM:  c_t = u * tanh(pre_c) + f * c_{t-1},  h_t = o * tanh(c_t),
//        pre_e = W_e x + U_e h_{t-1} + b_e, gates u, f, o through sigmoid.
// GRU:   u, r = sigmoid(W_e x + b_e + U_e h_{t-1} + b'_e),
//        cand = tanh(W_h x + b_h + U_h (r * h_{t-1}) + b'_h),
//        h_t = u * cand + (1 - u) * h_{t-1}.
// The GRU carries an input-side bias b and a hidden-side bias b'.

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ttrnn/ops.hpp"
#include "ttrnn/tt_matrix.hpp"

namespace ttrnn {

enum class CellKind { kLstm, kGru };
enum class Parameterization { kDense, kSeparate, kFused };

std::size_t gate_count(CellKind kind);
// Short gate names in stacking order.
const std::vector<std::string>& gate_names(CellKind kind);
const char* cell_kind_name(CellKind kind);
const char* parameterization_name(Parameterization p);
CellKind parse_cell_kind(const std::string& s);
Parameterization parse_parameterization(const std::string& s);

struct CellConfig {
  CellKind kind = CellKind::kLstm;
  Parameterization param = Parameterization::kDense;
  std::size_t hidden = 0;
  std::size_t input = 0;
  // Row factors of every TT matrix (product = hidden).
  std::vector<std::size_t> hidden_dims;
  // Column factors of the input-side TT matrices (product = input). The
  // hidden-side matrices use hidden_dims for both rows and columns.
  std::vector<std::size_t> input_dims;
  // Internal ranks r_1 .. r_{n-1} of each TT chain.
  std::vector<std::size_t> ranks;
  // Width of the gate core of fused stacks.
  std::size_t rank0 = 1;

  // Balanced factorizations with `cores` factors and uniform ranks.
  static CellConfig make(CellKind kind, Parameterization param,
                         std::size_t hidden, std::size_t input,
                         std::size_t cores = 2, std::size_t rank = 1,
                         std::size_t rank0 = 1);

  std::size_t gates() const { return gate_count(kind); }
  std::size_t cores() const { return hidden_dims.size(); }
  // Full chain ranks 1, r_1, ..., 1.
  std::vector<std::size_t> chain_ranks() const;
  bool dual_bias() const { return kind == CellKind::kGru; }
  // Throws ConfigError.
  void validate() const;
};

struct DenseCellParams {
  CellKind kind = CellKind::kLstm;
  Tensor w;            // [gD, M]
  Tensor u;            // [gD, D]
  Tensor bias;         // [gD]
  Tensor bias_hidden;  // [gD], GRU only
};

struct SeparateTTCellParams {
  CellKind kind = CellKind::kLstm;
  std::vector<TTMatrix> w;  // g matrices, D x M
  std::vector<TTMatrix> u;  // g matrices, D x D
  Tensor bias;
  Tensor bias_hidden;
};

struct FusedTTCellParams {
  CellKind kind = CellKind::kLstm;
  GateStackedTT w;  // gD x M
  GateStackedTT u;  // gD x D
  Tensor bias;
  Tensor bias_hidden;
};

using CellParams =
    std::variant<DenseCellParams, SeparateTTCellParams, FusedTTCellParams>;

// Parameter names under `prefix`:
//   dense     <p>.W, <p>.U
//   separate  <p>.W.<gate>.core<k>, <p>.U.<gate>.core<k>
//   fused     <p>.W.core<k>, <p>.U.core<k>   (core0 is the gate core)
//   biases    <p>.bias, and <p>.bias_hidden for the GRU
void store_cell_params(const CellParams& params, ParamStore& out,
                       const std::string& prefix = "cell");
CellParams load_cell_params(const CellConfig& config, const ParamStore& store,
                            const std::string& prefix = "cell");
CellConfig infer_cell_config(const CellParams& params);

// Dense W ~ N(0, 1/M), U ~ N(0, 1/D); TT matrices initialized to the same
// entry scale. Biases zero except the LSTM forget gate, which starts at 1.
CellParams init_cell(const CellConfig& config, std::uint64_t seed);

// Element counts.
std::uint64_t cell_element_count(const CellParams& params);
// Recurrent weights only (no biases).
std::uint64_t cell_weight_count(const CellParams& params);
// Recurrent weight count from the closed forms: g*D*(M+D) for dense cells,
// the per-gate chain sum for separate cells, and the fused sum with a single
// gate core for fused cells. Stored fused cells hold one more g*r0 core.
std::uint64_t cell_weight_formula(const CellConfig& config);

// Block [i*D, (i+1)*D) of the last axis of y[..., gD].
Tensor gate_slice(const Tensor& y, std::size_t gates, std::size_t i);

// Gate i's D x M matrix as sum_a V[i, a] M_a, with M_a the matrices encoded by
// the inner cores with the gate rank fixed to a.
Tensor gate_matrix_mixture(const GateStackedTT& stack, std::size_t i);
// The r0 inner matrices M_a, each D x M.
std::vector<Tensor> mixture_family(const GateStackedTT& stack);

// Dense parameters encoding the same cell.
DenseCellParams to_dense(const CellParams& params);

template <class Value>
struct CellStateOf {
  Value h;
  std::optional<Value> c;  // LSTM only
};

// Binds a cell's parameters on an ops backend and evaluates steps. Parameter
// views needed by every step (bias blocks, gate-core slices) are recorded
// once at construction.
template <class Ops>
class CellProgram {
 public:
  using Value = typename Ops::Value;
  using State = CellStateOf<Value>;

  CellProgram(Ops& ops, const CellConfig& config, std::string prefix = "cell")
      : ops_(&ops), config_(config) {
    config_.validate();
    const std::size_t g = config_.gates();
    const std::size_t d = config_.hidden;
    const std::string& p = prefix;
    bias_ = ops.param(p + ".bias");
    if (config_.dual_bias()) bias_hidden_ = ops.param(p + ".bias_hidden");
    switch (config_.param) {
      case Parameterization::kDense:
        w_dense_ = ops.param(p + ".W");
        u_dense_ = ops.param(p + ".U");
        break;
      case Parameterization::kSeparate:
        for (const std::string& gate : gate_names(config_.kind)) {
          w_sep_.push_back(chain(p + ".W." + gate, config_.cores()));
          u_sep_.push_back(chain(p + ".U." + gate, config_.cores()));
        }
        break;
      case Parameterization::kFused:
        w_fused_ = chain(p + ".W", config_.cores() + 1);
        u_fused_ = chain(p + ".U", config_.cores() + 1);
        break;
    }
    if (config_.kind == CellKind::kGru) {
      // Hidden-side rows split into the candidate block and the (u, r) block.
      hb_cand_ = ops.slice_last(bias_hidden_, 0, d);
      hb_ur_ = ops.slice_last(bias_hidden_, d, 2 * d);
      if (config_.param == Parameterization::kDense) {
        auto flat = ops.reshape(u_dense_, {1, g * d * d});
        u_cand_dense_ = ops.reshape(ops.slice_last(flat, 0, d * d), {d, d});
        u_ur_dense_ = ops.reshape(ops.slice_last(flat, d * d, 2 * d * d), {2 * d, d});
      } else if (config_.param == Parameterization::kFused) {
        const std::size_t r0 = config_.rank0;
        auto flat = ops.reshape(u_fused_[0], {1, g * r0});
        u_cand_fused_ = u_fused_;
        u_cand_fused_[0] = ops.reshape(ops.slice_last(flat, 0, r0), {1, 1, 1, r0});
        u_ur_fused_ = u_fused_;
        u_ur_fused_[0] = ops.reshape(ops.slice_last(flat, r0, 2 * r0), {2, 1, 1, r0});
      }
    }
  }

  const CellConfig& config() const { return config_; }

  State zero_state(std::size_t batch) const {
    State s{ops_->constant(Tensor(Shape{batch, config_.hidden})), std::nullopt};
    if (config_.kind == CellKind::kLstm) {
      s.c = ops_->constant(Tensor(Shape{batch, config_.hidden}));
    }
    return s;
  }

  // x: [batch, M]; state tensors [batch, D].
  State step(const State& state, const Value& x) const {
    return config_.kind == CellKind::kLstm ? lstm(state, x) : gru(state, x);
  }

  // W x for all gates, [batch, gD].
  Value input_product(const Value& x) const {
    switch (config_.param) {
      case Parameterization::kDense:
        return ops_->contract(x, w_dense_, {1}, {1});
      case Parameterization::kSeparate:
        return concat_products(w_sep_, x);
      case Parameterization::kFused:
        return tt_matvec<Ops>(*ops_, w_fused_, x);
    }
    throw ConfigError("unknown parameterization");
  }

  // U h for all gates, [batch, gD].
  Value hidden_product(const Value& h) const {
    switch (config_.param) {
      case Parameterization::kDense:
        return ops_->contract(h, u_dense_, {1}, {1});
      case Parameterization::kSeparate:
        return concat_products(u_sep_, h);
      case Parameterization::kFused:
        return tt_matvec<Ops>(*ops_, u_fused_, h);
    }
    throw ConfigError("unknown parameterization");
  }

 private:
  std::vector<Value> chain(const std::string& name, std::size_t n) const {
    std::vector<Value> cores;
    for (std::size_t k = 0; k < n; ++k) {
      cores.push_back(ops_->param(name + ".core" + std::to_string(k)));
    }
    return cores;
  }

  Value concat_products(std::span<const std::vector<Value>> chains,
                        const Value& x) const {
    std::vector<Value> parts;
    for (const auto& cores : chains) parts.push_back(tt_matvec<Ops>(*ops_, cores, x));
    return ops_->concat_last(parts);
  }

  Value gate(const Value& pre, std::size_t i) const {
    return ops_->slice_last(pre, i * config_.hidden, config_.hidden);
  }

  State lstm(const State& state, const Value& x) const {
    if (!state.c) throw StateError("LSTM step needs a cell state");
    auto pre = ops_->add_bias(
        ops_->add(input_product(x), hidden_product(state.h)), bias_);
    auto cand = ops_->tanh(gate(pre, 0));
    auto upd = ops_->sigmoid(gate(pre, 1));
    auto fgt = ops_->sigmoid(gate(pre, 2));
    auto out = ops_->sigmoid(gate(pre, 3));
    auto c = ops_->add(ops_->hadamard(upd, cand), ops_->hadamard(fgt, *state.c));
    auto h = ops_->hadamard(out, ops_->tanh(c));
    return State{h, c};
  }

  // U rows of the (u, r) gates applied to h, [batch, 2D].
  Value hidden_ur(const Value& h) const {
    switch (config_.param) {
      case Parameterization::kDense:
        return ops_->contract(h, u_ur_dense_, {1}, {1});
      case Parameterization::kSeparate:
        return concat_products(std::span(u_sep_).subspan(1, 2), h);
      case Parameterization::kFused:
        return tt_matvec<Ops>(*ops_, u_ur_fused_, h);
    }
    throw ConfigError("unknown parameterization");
  }

  // Candidate-gate U rows applied to v, [batch, D].
  Value hidden_cand(const Value& v) const {
    switch (config_.param) {
      case Parameterization::kDense:
        return ops_->contract(v, u_cand_dense_, {1}, {1});
      case Parameterization::kSeparate:
        return tt_matvec<Ops>(*ops_, u_sep_[0], v);
      case Parameterization::kFused:
        return tt_matvec<Ops>(*ops_, u_cand_fused_, v);
    }
    throw ConfigError("unknown parameterization");
  }

  State gru(const State& state, const Value& x) const {
    const std::size_t d = config_.hidden;
    auto a = ops_->add_bias(input_product(x), bias_);
    auto ur = ops_->add(ops_->slice_last(a, d, 2 * d),
                        ops_->add_bias(hidden_ur(state.h), hb_ur_));
    auto upd = ops_->sigmoid(ops_->slice_last(ur, 0, d));
    auto rst = ops_->sigmoid(ops_->slice_last(ur, d, d));
    auto cand = ops_->tanh(ops_->add(
        gate(a, 0),
        ops_->add_bias(hidden_cand(ops_->hadamard(rst, state.h)), hb_cand_)));
    auto keep = ops_->add_const(ops_->scale(upd, -1.0), 1.0);
    auto h = ops_->add(ops_->hadamard(upd, cand), ops_->hadamard(keep, state.h));
    return State{h, std::nullopt};
  }

  Ops* ops_;
  CellConfig config_;
  Value bias_{};
  Value bias_hidden_{};
  Value hb_cand_{};
  Value hb_ur_{};
  Value w_dense_{};
  Value u_dense_{};
  Value u_cand_dense_{};
  Value u_ur_dense_{};
  std::vector<std::vector<Value>> w_sep_;
  std::vector<std::vector<Value>> u_sep_;
  std::vector<Value> w_fused_;
  std::vector<Value> u_fused_;
  std::vector<Value> u_cand_fused_;
  std::vector<Value> u_ur_fused_;
};

// Unrolls the cell over xs (each [batch, M]); returns every h_t and the final
// state.
template <class Ops>
std::pair<std::vector<typename Ops::Value>, CellStateOf<typename Ops::Value>>
run_sequence(const CellProgram<Ops>& program,
             std::span<const typename Ops::Value> xs,
             CellStateOf<typename Ops::Value> state) {
  if (xs.empty()) throw ShapeError("run_sequence needs at least one step");
  std::vector<typename Ops::Value> hs;
  hs.reserve(xs.size());
  for (const auto& x : xs) {
    state = program.step(state, x);
    hs.push_back(state.h);
  }
  return {std::move(hs), std::move(state)};
}

using CellState = CellStateOf<Tensor>;

// Single eager steps. Inputs are [batch, M], states [batch, D].
CellState lstm_step(const DenseCellParams& params, const Tensor& x,
                    const CellState& state);
Tensor gru_step(const DenseCellParams& params, const Tensor& x,
                const Tensor& h_prev);
CellState tt_cell_step_separate(const SeparateTTCellParams& params,
                                const Tensor& x, const CellState& state);
CellState tt_cell_step_fused(const FusedTTCellParams& params, const Tensor& x,
                             const CellState& state);
CellState cell_step(const CellParams& params, const Tensor& x,
                    const CellState& state);

// inputs [T, batch, M]; returns all hidden states [T, batch, D] and the final
// state.
std::pair<Tensor, CellState> run_sequence(const CellParams& params,
                                          const Tensor& inputs,
                                          const CellState& init);

}  // namespace ttrnn
