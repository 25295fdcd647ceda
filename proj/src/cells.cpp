// Copyright 2026 The ttrnn Authors. Apache 2.0 License.

#include "ttrnn/cells.hpp"

#include <cmath>

#include "ttrnn/random.hpp"

namespace ttrnn {
namespace {

std::size_t product(const std::vector<std::size_t>& v) {
  std::size_t p = 1;
  for (std::size_t x : v) p *= x;
  return p;
}

std::vector<std::size_t> prepend(std::size_t first, const std::vector<std::size_t>& rest) {
  std::vector<std::size_t> out{first};
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

CellKind kind_of(const CellParams& params) {
  return std::visit([](const auto& p) { return p.kind; }, params);
}

void store_tt(const TTMatrix& m, ParamStore& out, const std::string& name) {
  for (std::size_t k = 0; k < m.num_cores(); ++k) {
    out[name + ".core" + std::to_string(k)] = m.core(k).values();
  }
}

TTMatrix load_tt(const ParamStore& store, const std::string& name, std::size_t n) {
  std::vector<Tensor> cores;
  for (std::size_t k = 0; k < n; ++k) {
    const std::string key = name + ".core" + std::to_string(k);
    auto it = store.find(key);
    if (it == store.end()) throw ConfigError("missing parameter '" + key + "'");
    cores.push_back(it->second);
  }
  return TTMatrix::from_tensors(std::move(cores));
}

const Tensor& find_param(const ParamStore& store, const std::string& key) {
  auto it = store.find(key);
  if (it == store.end()) throw ConfigError("missing parameter '" + key + "'");
  return it->second;
}

void expect_shape(const TTMatrix& m, const std::vector<std::size_t>& rows,
                  const std::vector<std::size_t>& cols,
                  const std::vector<std::size_t>& ranks, const std::string& what) {
  if (m.row_dims() != rows || m.col_dims() != cols || m.ranks() != ranks) {
    throw ConfigError(what + ": TT structure does not match the configuration");
  }
}

void expect_shape(const Tensor& t, const Shape& shape, const std::string& what) {
  if (t.shape() != shape) {
    throw ConfigError(what + " has shape " + shape_str(t.shape()) + ", expected " +
                      shape_str(shape));
  }
}

Tensor gaussian(Shape shape, std::uint64_t seed, double stddev) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = stddev * rng.normal();
  return t;
}

}  // namespace

std::size_t gate_count(CellKind kind) { return kind == CellKind::kLstm ? 4 : 3; }

const std::vector<std::string>& gate_names(CellKind kind) {
  static const std::vector<std::string> lstm{"c", "u", "f", "o"};
  static const std::vector<std::string> gru{"h", "u", "r"};
  return kind == CellKind::kLstm ? lstm : gru;
}

const char* cell_kind_name(CellKind kind) {
  return kind == CellKind::kLstm ? "lstm" : "gru";
}

const char* parameterization_name(Parameterization p) {
  switch (p) {
    case Parameterization::kDense:
      return "dense";
    case Parameterization::kSeparate:
      return "tt-sep";
    case Parameterization::kFused:
      return "tt-fused";
  }
  return "?";
}

CellKind parse_cell_kind(const std::string& s) {
  if (s == "lstm") return CellKind::kLstm;
  if (s == "gru") return CellKind::kGru;
  throw ConfigError("unknown cell '" + s + "' (expected lstm or gru)");
}

Parameterization parse_parameterization(const std::string& s) {
  if (s == "dense") return Parameterization::kDense;
  if (s == "tt-sep") return Parameterization::kSeparate;
  if (s == "tt-fused") return Parameterization::kFused;
  throw ConfigError("unknown parameterization '" + s +
                    "' (expected dense, tt-sep or tt-fused)");
}

CellConfig CellConfig::make(CellKind kind, Parameterization param,
                            std::size_t hidden, std::size_t input,
                            std::size_t cores, std::size_t rank,
                            std::size_t rank0) {
  if (hidden == 0 || input == 0 || cores == 0) {
    throw ConfigError("hidden, input and cores must be positive");
  }
  CellConfig c;
  c.kind = kind;
  c.param = param;
  c.hidden = hidden;
  c.input = input;
  c.hidden_dims = balanced_factorization(hidden, cores);
  c.input_dims = balanced_factorization(input, cores);
  c.ranks.assign(cores - 1, rank);
  c.rank0 = rank0;
  return c;
}

std::vector<std::size_t> CellConfig::chain_ranks() const {
  std::vector<std::size_t> r{1};
  r.insert(r.end(), ranks.begin(), ranks.end());
  r.push_back(1);
  return r;
}

void CellConfig::validate() const {
  if (hidden == 0 || input == 0) throw ConfigError("hidden and input must be positive");
  if (param == Parameterization::kDense) return;
  if (hidden_dims.empty() || hidden_dims.size() != input_dims.size()) {
    throw ConfigError("hidden and input factorizations need the same number of cores");
  }
  if (product(hidden_dims) != hidden) {
    throw ConfigError("hidden factors do not multiply to " + std::to_string(hidden));
  }
  if (product(input_dims) != input) {
    throw ConfigError("input factors do not multiply to " + std::to_string(input));
  }
  if (ranks.size() + 1 != hidden_dims.size()) {
    throw ConfigError("expected " + std::to_string(hidden_dims.size() - 1) +
                      " internal ranks");
  }
  for (std::size_t r : ranks) {
    if (r == 0) throw ConfigError("ranks must be positive");
  }
  if (rank0 == 0) throw ConfigError("rank0 must be positive");
}

void store_cell_params(const CellParams& params, ParamStore& out,
                       const std::string& prefix) {
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, DenseCellParams>) {
          out[prefix + ".W"] = p.w;
          out[prefix + ".U"] = p.u;
        } else if constexpr (std::is_same_v<P, SeparateTTCellParams>) {
          const auto& names = gate_names(p.kind);
          for (std::size_t e = 0; e < names.size(); ++e) {
            store_tt(p.w.at(e), out, prefix + ".W." + names[e]);
            store_tt(p.u.at(e), out, prefix + ".U." + names[e]);
          }
        } else {
          store_tt(p.w.matrix(), out, prefix + ".W");
          store_tt(p.u.matrix(), out, prefix + ".U");
        }
        out[prefix + ".bias"] = p.bias;
        if (p.kind == CellKind::kGru) out[prefix + ".bias_hidden"] = p.bias_hidden;
      },
      params);
}

CellParams load_cell_params(const CellConfig& config, const ParamStore& store,
                            const std::string& prefix) {
  config.validate();
  const std::size_t g = config.gates();
  const std::size_t d = config.hidden;
  Tensor bias = find_param(store, prefix + ".bias");
  expect_shape(bias, {g * d}, prefix + ".bias");
  Tensor bias_hidden;
  if (config.dual_bias()) {
    bias_hidden = find_param(store, prefix + ".bias_hidden");
    expect_shape(bias_hidden, {g * d}, prefix + ".bias_hidden");
  }
  switch (config.param) {
    case Parameterization::kDense: {
      DenseCellParams p{config.kind, find_param(store, prefix + ".W"),
                        find_param(store, prefix + ".U"), bias, bias_hidden};
      expect_shape(p.w, {g * d, config.input}, prefix + ".W");
      expect_shape(p.u, {g * d, d}, prefix + ".U");
      return p;
    }
    case Parameterization::kSeparate: {
      SeparateTTCellParams p{config.kind, {}, {}, bias, bias_hidden};
      const auto ranks = config.chain_ranks();
      for (const std::string& gate : gate_names(config.kind)) {
        p.w.push_back(load_tt(store, prefix + ".W." + gate, config.cores()));
        p.u.push_back(load_tt(store, prefix + ".U." + gate, config.cores()));
        expect_shape(p.w.back(), config.hidden_dims, config.input_dims, ranks,
                     prefix + ".W." + gate);
        expect_shape(p.u.back(), config.hidden_dims, config.hidden_dims, ranks,
                     prefix + ".U." + gate);
      }
      return p;
    }
    case Parameterization::kFused: {
      TTMatrix w = load_tt(store, prefix + ".W", config.cores() + 1);
      TTMatrix u = load_tt(store, prefix + ".U", config.cores() + 1);
      const auto ranks = prepend(1, prepend(config.rank0, std::vector<std::size_t>(
                                                              config.ranks.begin(),
                                                              config.ranks.end())));
      auto full_ranks = ranks;
      full_ranks.push_back(1);
      expect_shape(w, prepend(g, config.hidden_dims), prepend(1, config.input_dims),
                   full_ranks, prefix + ".W");
      expect_shape(u, prepend(g, config.hidden_dims), prepend(1, config.hidden_dims),
                   full_ranks, prefix + ".U");
      return FusedTTCellParams{config.kind, GateStackedTT(std::move(w)),
                               GateStackedTT(std::move(u)), bias, bias_hidden};
    }
  }
  throw ConfigError("unknown parameterization");
}

CellConfig infer_cell_config(const CellParams& params) {
  CellConfig c;
  c.kind = kind_of(params);
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        const std::size_t g = gate_count(p.kind);
        if constexpr (std::is_same_v<P, DenseCellParams>) {
          c.param = Parameterization::kDense;
          c.hidden = p.u.dim(1);
          c.input = p.w.dim(1);
          (void)g;
        } else if constexpr (std::is_same_v<P, SeparateTTCellParams>) {
          c.param = Parameterization::kSeparate;
          const TTMatrix& w = p.w.at(0);
          c.hidden = w.rows();
          c.input = w.cols();
          c.hidden_dims = w.row_dims();
          c.input_dims = w.col_dims();
          const auto r = w.ranks();
          c.ranks.assign(r.begin() + 1, r.end() - 1);
        } else {
          c.param = Parameterization::kFused;
          const TTMatrix& w = p.w.matrix();
          c.hidden = p.w.gate_rows();
          c.input = p.w.gate_cols();
          const auto rows = w.row_dims();
          const auto cols = w.col_dims();
          c.hidden_dims.assign(rows.begin() + 1, rows.end());
          c.input_dims.assign(cols.begin() + 1, cols.end());
          const auto r = w.ranks();
          c.rank0 = r[1];
          c.ranks.assign(r.begin() + 2, r.end() - 1);
          (void)g;
        }
      },
      params);
  return c;
}

CellParams init_cell(const CellConfig& config, std::uint64_t seed) {
  config.validate();
  const std::size_t g = config.gates();
  const std::size_t d = config.hidden;
  const double w_std = 1.0 / std::sqrt(static_cast<double>(config.input));
  const double u_std = 1.0 / std::sqrt(static_cast<double>(d));
  Tensor bias(Shape{g * d});
  if (config.kind == CellKind::kLstm) {
    for (std::size_t j = 2 * d; j < 3 * d; ++j) bias[j] = 1.0;
  }
  Tensor bias_hidden;
  if (config.dual_bias()) bias_hidden = Tensor(Shape{g * d});

  switch (config.param) {
    case Parameterization::kDense:
      return DenseCellParams{config.kind,
                             gaussian({g * d, config.input}, mix_seed(seed, 1), w_std),
                             gaussian({g * d, d}, mix_seed(seed, 2), u_std), bias,
                             bias_hidden};
    case Parameterization::kSeparate: {
      SeparateTTCellParams p{config.kind, {}, {}, bias, bias_hidden};
      const auto ranks = config.chain_ranks();
      for (std::size_t e = 0; e < g; ++e) {
        p.w.push_back(init_tt(config.hidden_dims, config.input_dims, ranks,
                              mix_seed(seed, 100 + e), w_std));
        p.u.push_back(init_tt(config.hidden_dims, config.hidden_dims, ranks,
                              mix_seed(seed, 200 + e), u_std));
      }
      return p;
    }
    case Parameterization::kFused: {
      std::vector<std::size_t> ranks{1, config.rank0};
      ranks.insert(ranks.end(), config.ranks.begin(), config.ranks.end());
      ranks.push_back(1);
      TTMatrix w = init_tt(prepend(g, config.hidden_dims), prepend(1, config.input_dims),
                           ranks, mix_seed(seed, 1), w_std);
      TTMatrix u = init_tt(prepend(g, config.hidden_dims), prepend(1, config.hidden_dims),
                           ranks, mix_seed(seed, 2), u_std);
      return FusedTTCellParams{config.kind, GateStackedTT(std::move(w)),
                               GateStackedTT(std::move(u)), bias, bias_hidden};
    }
  }
  throw ConfigError("unknown parameterization");
}

std::uint64_t cell_weight_formula(const CellConfig& config) {
  config.validate();
  const std::uint64_t g = config.gates();
  switch (config.param) {
    case Parameterization::kDense:
      return param_count_dense(g, config.hidden, config.input);
    case Parameterization::kSeparate:
      return param_count_separate(g, config.hidden_dims, config.input_dims,
                                  config.chain_ranks());
    case Parameterization::kFused: {
      std::vector<std::size_t> ranks = config.chain_ranks();
      ranks.front() = config.rank0;
      return param_count_fused(g, config.rank0, config.hidden_dims, config.input_dims, ranks);
    }
  }
  throw ConfigError("unknown parameterization");
}

std::uint64_t cell_weight_count(const CellParams& params) {
  return std::visit(
      [](const auto& p) -> std::uint64_t {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, DenseCellParams>) {
          return p.w.size() + p.u.size();
        } else if constexpr (std::is_same_v<P, SeparateTTCellParams>) {
          std::uint64_t n = 0;
          for (const auto& m : p.w) n += m.element_count();
          for (const auto& m : p.u) n += m.element_count();
          return n;
        } else {
          return p.w.matrix().element_count() + p.u.matrix().element_count();
        }
      },
      params);
}

std::uint64_t cell_element_count(const CellParams& params) {
  return cell_weight_count(params) +
         std::visit(
             [](const auto& p) -> std::uint64_t {
               return p.bias.size() +
                      (p.kind == CellKind::kGru ? p.bias_hidden.size() : 0);
             },
             params);
}

Tensor gate_slice(const Tensor& y, std::size_t gates, std::size_t i) {
  if (gates == 0 || y.rank() == 0 || y.shape().back() % gates != 0) {
    throw ShapeError("gate_slice: last axis not divisible into gate blocks");
  }
  if (i >= gates) {
    throw ShapeError("gate index " + std::to_string(i) + " out of range");
  }
  const std::size_t d = y.shape().back() / gates;
  return kernels::slice_last(y, i * d, d);
}

std::vector<Tensor> mixture_family(const GateStackedTT& stack) {
  const TTMatrix& m = stack.matrix();
  const std::size_t r0 = stack.mixing_rank();
  const TTCore& first = m.core(1);
  std::vector<Tensor> family;
  for (std::size_t a = 0; a < r0; ++a) {
    // Fix the incoming rank index of the first inner core to a.
    Tensor head(Shape{first.row_dim(), first.col_dim(), 1, first.rank_out()});
    for (std::size_t i = 0; i < first.row_dim(); ++i)
      for (std::size_t j = 0; j < first.col_dim(); ++j)
        for (std::size_t b = 0; b < first.rank_out(); ++b)
          head.at({i, j, 0, b}) = first.values().at({i, j, a, b});
    std::vector<Tensor> cores{head};
    for (std::size_t k = 2; k < m.num_cores(); ++k) cores.push_back(m.core(k).values());
    family.push_back(tt_to_dense(TTMatrix::from_tensors(std::move(cores))));
  }
  return family;
}

Tensor gate_matrix_mixture(const GateStackedTT& stack, std::size_t i) {
  if (i >= stack.gate_count()) {
    throw ShapeError("gate index " + std::to_string(i) + " out of range");
  }
  const Tensor v = stack.mixing_matrix();
  const std::vector<Tensor> family = mixture_family(stack);
  Tensor out(family.front().shape());
  for (std::size_t a = 0; a < family.size(); ++a) {
    const double coef = v.at({i, a});
    auto o = out.data();
    auto f = family[a].data();
    for (std::size_t j = 0; j < o.size(); ++j) o[j] += coef * f[j];
  }
  return out;
}

DenseCellParams to_dense(const CellParams& params) {
  return std::visit(
      [](const auto& p) -> DenseCellParams {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, DenseCellParams>) {
          return p;
        } else if constexpr (std::is_same_v<P, SeparateTTCellParams>) {
          std::vector<Tensor> w, u;
          for (const auto& m : p.w) w.push_back(tt_to_dense(m));
          for (const auto& m : p.u) u.push_back(tt_to_dense(m));
          auto stack = [](const std::vector<Tensor>& blocks) {
            std::vector<double> data;
            for (const Tensor& b : blocks) {
              data.insert(data.end(), b.data().begin(), b.data().end());
            }
            return Tensor(Shape{blocks.size() * blocks[0].dim(0), blocks[0].dim(1)},
                          std::move(data));
          };
          return DenseCellParams{p.kind, stack(w), stack(u), p.bias, p.bias_hidden};
        } else {
          auto stack = [](const GateStackedTT& s) {
            std::vector<double> data;
            for (std::size_t i = 0; i < s.gate_count(); ++i) {
              Tensor b = gate_matrix_mixture(s, i);
              data.insert(data.end(), b.data().begin(), b.data().end());
            }
            return Tensor(Shape{s.gate_count() * s.gate_rows(), s.gate_cols()},
                          std::move(data));
          };
          return DenseCellParams{p.kind, stack(p.w), stack(p.u), p.bias, p.bias_hidden};
        }
      },
      params);
}

namespace {

void check_state(const CellState& state, bool lstm) {
  if (!all_finite(state.h) || (state.c && !all_finite(*state.c))) {
    throw NumericError("cell state has non-finite entries");
  }
  if (lstm && !state.c) throw StateError("LSTM step needs a cell state");
}

CellState eager_step(const CellParams& params, const Tensor& x,
                     const CellState& state) {
  const CellConfig config = infer_cell_config(params);
  check_state(state, config.kind == CellKind::kLstm);
  if (!all_finite(x)) throw NumericError("cell input has non-finite entries");
  if (x.rank() != 2 || x.dim(1) != config.input || state.h.rank() != 2 ||
      state.h.dim(1) != config.hidden || state.h.dim(0) != x.dim(0)) {
    throw ShapeError("cell step: input " + shape_str(x.shape()) + " / state " +
                     shape_str(state.h.shape()) + " do not match hidden " +
                     std::to_string(config.hidden) + ", input " +
                     std::to_string(config.input));
  }
  ParamStore store;
  store_cell_params(params, store);
  EagerOps ops(&store);
  CellProgram<EagerOps> program(ops, config);
  CellState out = program.step(state, x);
  check_state(out, false);
  return out;
}

}  // namespace

CellState lstm_step(const DenseCellParams& params, const Tensor& x,
                    const CellState& state) {
  if (params.kind != CellKind::kLstm) throw ConfigError("lstm_step needs LSTM parameters");
  return eager_step(params, x, state);
}

Tensor gru_step(const DenseCellParams& params, const Tensor& x, const Tensor& h_prev) {
  if (params.kind != CellKind::kGru) throw ConfigError("gru_step needs GRU parameters");
  return eager_step(params, x, CellState{h_prev, std::nullopt}).h;
}

CellState tt_cell_step_separate(const SeparateTTCellParams& params, const Tensor& x,
                                const CellState& state) {
  return eager_step(params, x, state);
}

CellState tt_cell_step_fused(const FusedTTCellParams& params, const Tensor& x,
                             const CellState& state) {
  return eager_step(params, x, state);
}

CellState cell_step(const CellParams& params, const Tensor& x, const CellState& state) {
  return eager_step(params, x, state);
}

std::pair<Tensor, CellState> run_sequence(const CellParams& params,
                                          const Tensor& inputs,
                                          const CellState& init) {
  if (inputs.rank() != 3) throw ShapeError("run_sequence expects [T, batch, M]");
  const CellConfig config = infer_cell_config(params);
  check_state(init, config.kind == CellKind::kLstm);
  const std::size_t steps = inputs.dim(0);
  const std::size_t batch = inputs.dim(1);
  const std::size_t m = inputs.dim(2);
  ParamStore store;
  store_cell_params(params, store);
  EagerOps ops(&store);
  CellProgram<EagerOps> program(ops, config);
  std::vector<Tensor> xs;
  for (std::size_t t = 0; t < steps; ++t) {
    xs.emplace_back(Shape{batch, m},
                    std::vector<double>(inputs.data().begin() + t * batch * m,
                                        inputs.data().begin() + (t + 1) * batch * m));
  }
  auto [hs, last] = run_sequence<EagerOps>(program, xs, init);
  std::vector<double> all;
  all.reserve(steps * batch * config.hidden);
  for (const Tensor& h : hs) all.insert(all.end(), h.data().begin(), h.data().end());
  check_state(last, false);
  return {Tensor(Shape{steps, batch, config.hidden}, std::move(all)), std::move(last)};
}

}  // namespace ttrnn
