#pragma once

// Compute-graph IR: vertices are tensors, edges are operators.
//
// Every non-input vertex is produced by exactly one edge; an edge may read
// several vertices. Graphs are values: mutation copies and edits.

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "thermalfuzz/rng.hpp"
#include "thermalfuzz/tensor.hpp"

namespace thermalfuzz {

using VertexId = std::int64_t;
using EdgeId = std::int64_t;

enum class Precision { int8, fp16, fp32, mixed_int8_fp16 };
enum class ConvVariant { standard, depthwise, separable };
enum class RnnDirection { uni, bi };
enum class LayerCount { single, multi };
enum class ElementwiseOp { relu, add, mul };
enum class PoolMode { max, avg };

inline constexpr int kMultiLayerDepth = 2;

// Operator kinds. Shape-determining parameters live on the kind.

struct GemmConv {
  ConvVariant variant = ConvVariant::standard;
  Precision precision = Precision::fp32;
  bool gemm = true;      ///< GEMM lowering enabled
  int kernel = 3;        ///< square window, stride 1, no padding
  int out_channels = 4;  ///< ignored for depthwise (output keeps input channels)
  friend bool operator==(const GemmConv&, const GemmConv&) = default;
};

/// (..., M, K) x W(K, N) with one source, or A(M, K) x B(K, N) with two.
struct MatMul {
  Precision precision = Precision::fp32;
  int out_features = 4;
  friend bool operator==(const MatMul&, const MatMul&) = default;
};

struct Rnn {
  RnnDirection direction = RnnDirection::uni;
  int hidden = 4;
  friend bool operator==(const Rnn&, const Rnn&) = default;
};

struct Lstm {
  LayerCount layers = LayerCount::single;
  bool bidirectional = false;
  int hidden = 4;
  friend bool operator==(const Lstm&, const Lstm&) = default;
};

struct Gru {
  LayerCount layers = LayerCount::single;
  bool bidirectional = false;
  int hidden = 4;
  friend bool operator==(const Gru&, const Gru&) = default;
};

struct Elementwise {
  ElementwiseOp op = ElementwiseOp::relu;
  friend bool operator==(const Elementwise&, const Elementwise&) = default;
};

/// Linear map over the last axis.
struct Dense {
  int out_features = 4;
  friend bool operator==(const Dense&, const Dense&) = default;
};

/// 3-wide window, stride 1, same padding, over the leading spatial axes.
struct Pool {
  PoolMode mode = PoolMode::max;
  friend bool operator==(const Pool&, const Pool&) = default;
};

struct BatchNorm {
  friend bool operator==(const BatchNorm&, const BatchNorm&) = default;
};

/// Empty operator slot: passes its input through unchanged.
struct NonePlaceholder {
  friend bool operator==(const NonePlaceholder&, const NonePlaceholder&) = default;
};

/// Shape repair: resamples the flattened input onto the target shape.
struct Adapter {
  friend bool operator==(const Adapter&, const Adapter&) = default;
};

using OperatorKind =
    std::variant<GemmConv, MatMul, Rnn, Lstm, Gru, Elementwise, Dense, Pool, BatchNorm, NonePlaceholder, Adapter>;

inline std::string_view to_string(Precision p) {
  switch (p) {
    case Precision::int8: return "int8";
    case Precision::fp16: return "fp16";
    case Precision::fp32: return "fp32";
    case Precision::mixed_int8_fp16: return "mixed_int8_fp16";
  }
  return "?";
}

inline Precision precision_from_string(std::string_view s) {
  if (s == "int8") return Precision::int8;
  if (s == "fp16") return Precision::fp16;
  if (s == "fp32") return Precision::fp32;
  if (s == "mixed_int8_fp16") return Precision::mixed_int8_fp16;
  throw std::invalid_argument("unknown precision: " + std::string(s));
}

inline std::string_view kind_name(const OperatorKind& kind) {
  struct V {
    std::string_view operator()(const GemmConv&) const { return "gemm_conv"; }
    std::string_view operator()(const MatMul&) const { return "matmul"; }
    std::string_view operator()(const Rnn&) const { return "rnn"; }
    std::string_view operator()(const Lstm&) const { return "lstm"; }
    std::string_view operator()(const Gru&) const { return "gru"; }
    std::string_view operator()(const Elementwise& e) const {
      switch (e.op) {
        case ElementwiseOp::relu: return "relu";
        case ElementwiseOp::add: return "add";
        case ElementwiseOp::mul: return "mul";
      }
      return "?";
    }
    std::string_view operator()(const Dense&) const { return "dense"; }
    std::string_view operator()(const Pool& p) const { return p.mode == PoolMode::max ? "max_pool" : "avg_pool"; }
    std::string_view operator()(const BatchNorm&) const { return "batch_norm"; }
    std::string_view operator()(const NonePlaceholder&) const { return "none"; }
    std::string_view operator()(const Adapter&) const { return "adapter"; }
  };
  return std::visit(V{}, kind);
}

inline std::optional<Precision> precision_of(const OperatorKind& kind) {
  if (auto* c = std::get_if<GemmConv>(&kind)) return c->precision;
  if (auto* m = std::get_if<MatMul>(&kind)) return m->precision;
  return std::nullopt;
}

inline bool is_recurrent(const OperatorKind& kind) {
  return std::holds_alternative<Rnn>(kind) || std::holds_alternative<Lstm>(kind) ||
         std::holds_alternative<Gru>(kind);
}

inline bool is_placeholder(const OperatorKind& kind) { return std::holds_alternative<NonePlaceholder>(kind); }

/// Compute-intensive, high/mixed-precision and time-series operators.
inline bool temperature_sensitive(const OperatorKind& kind) {
  if (std::holds_alternative<GemmConv>(kind) || std::holds_alternative<MatMul>(kind) || is_recurrent(kind))
    return true;
  auto p = precision_of(kind);
  return p && (*p == Precision::fp32 || *p == Precision::mixed_int8_fp16);
}

// --- coverage categories ----------------------------------------------------

/// The fixed 16-category operator universe used for coverage.
enum class OpCategory {
  // temperature-sensitive
  gemm_conv,
  matmul,
  high_precision,
  mixed_precision,
  rnn,
  lstm,
  gru,
  // non-sensitive
  low_precision,
  relu,
  add,
  mul,
  dense,
  max_pool,
  avg_pool,
  batch_norm,
  adapter,
};

inline constexpr std::array<OpCategory, 16> kAllCategories = {
    OpCategory::gemm_conv,     OpCategory::matmul, OpCategory::high_precision, OpCategory::mixed_precision,
    OpCategory::rnn,           OpCategory::lstm,   OpCategory::gru,            OpCategory::low_precision,
    OpCategory::relu,          OpCategory::add,    OpCategory::mul,            OpCategory::dense,
    OpCategory::max_pool,      OpCategory::avg_pool, OpCategory::batch_norm,   OpCategory::adapter,
};

inline bool category_sensitive(OpCategory c) {
  switch (c) {
    case OpCategory::gemm_conv:
    case OpCategory::matmul:
    case OpCategory::high_precision:
    case OpCategory::mixed_precision:
    case OpCategory::rnn:
    case OpCategory::lstm:
    case OpCategory::gru: return true;
    default: return false;
  }
}

inline std::string_view to_string(OpCategory c) {
  static constexpr std::array<std::string_view, 16> names = {
      "gemm_conv", "matmul", "high_precision", "mixed_precision", "rnn",      "lstm",
      "gru",       "low_precision", "relu",    "add",             "mul",      "dense",
      "max_pool",  "avg_pool", "batch_norm",   "adapter"};
  return names[static_cast<std::size_t>(c)];
}

inline OpCategory category_from_string(std::string_view s) {
  for (auto c : kAllCategories)
    if (to_string(c) == s) return c;
  throw std::invalid_argument("unknown operator category: " + std::string(s));
}

inline std::vector<OpCategory> default_universe() { return {kAllCategories.begin(), kAllCategories.end()}; }

/// Categories an operator counts toward. A placeholder counts toward none.
inline std::vector<OpCategory> categories_of(const OperatorKind& kind) {
  std::vector<OpCategory> out;
  auto add_precision = [&](Precision p) {
    switch (p) {
      case Precision::int8:
      case Precision::fp16: out.push_back(OpCategory::low_precision); break;
      case Precision::fp32: out.push_back(OpCategory::high_precision); break;
      case Precision::mixed_int8_fp16: out.push_back(OpCategory::mixed_precision); break;
    }
  };
  std::visit(
      [&](const auto& k) {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, GemmConv>) {
          out.push_back(OpCategory::gemm_conv);
          add_precision(k.precision);
        } else if constexpr (std::is_same_v<K, MatMul>) {
          out.push_back(OpCategory::matmul);
          add_precision(k.precision);
        } else if constexpr (std::is_same_v<K, Rnn>) {
          out.push_back(OpCategory::rnn);
        } else if constexpr (std::is_same_v<K, Lstm>) {
          out.push_back(OpCategory::lstm);
        } else if constexpr (std::is_same_v<K, Gru>) {
          out.push_back(OpCategory::gru);
        } else if constexpr (std::is_same_v<K, Elementwise>) {
          out.push_back(k.op == ElementwiseOp::relu  ? OpCategory::relu
                        : k.op == ElementwiseOp::add ? OpCategory::add
                                                     : OpCategory::mul);
        } else if constexpr (std::is_same_v<K, Dense>) {
          out.push_back(OpCategory::dense);
        } else if constexpr (std::is_same_v<K, Pool>) {
          out.push_back(k.mode == PoolMode::max ? OpCategory::max_pool : OpCategory::avg_pool);
        } else if constexpr (std::is_same_v<K, BatchNorm>) {
          out.push_back(OpCategory::batch_norm);
        } else if constexpr (std::is_same_v<K, Adapter>) {
          out.push_back(OpCategory::adapter);
        }
      },
      kind);
  return out;
}

// --- graph ------------------------------------------------------------------

enum class InputModality { generic, image, sequence, voxel };

inline std::string_view to_string(InputModality m) {
  switch (m) {
    case InputModality::generic: return "generic";
    case InputModality::image: return "image";
    case InputModality::sequence: return "sequence";
    case InputModality::voxel: return "voxel";
  }
  return "?";
}

inline InputModality modality_from_string(std::string_view s) {
  if (s == "generic") return InputModality::generic;
  if (s == "image") return InputModality::image;
  if (s == "sequence") return InputModality::sequence;
  if (s == "voxel") return InputModality::voxel;
  throw std::invalid_argument("unknown input modality: " + std::string(s));
}

struct Edge {
  EdgeId id = 0;
  std::vector<VertexId> srcs;
  VertexId dst = 0;
  OperatorKind kind = NonePlaceholder{};
  std::uint64_t weight_seed = 1;

  friend bool operator==(const Edge&, const Edge&) = default;
};

struct GraphInput {
  VertexId vertex = 0;
  InputModality modality = InputModality::generic;
  friend bool operator==(const GraphInput&, const GraphInput&) = default;
};

struct ModelGraph {
  std::string name;
  std::map<VertexId, TensorSpec> vertices;
  std::map<EdgeId, Edge> edges;
  std::vector<GraphInput> inputs;
  VertexId output = 0;

  [[nodiscard]] const TensorSpec& spec(VertexId v) const { return vertices.at(v); }

  [[nodiscard]] VertexId next_vertex_id() const { return vertices.empty() ? 0 : vertices.rbegin()->first + 1; }
  [[nodiscard]] EdgeId next_edge_id() const { return edges.empty() ? 0 : edges.rbegin()->first + 1; }

  [[nodiscard]] bool is_input(VertexId v) const {
    return std::any_of(inputs.begin(), inputs.end(), [v](const GraphInput& in) { return in.vertex == v; });
  }

  /// The edge writing `v`, if any.
  [[nodiscard]] const Edge* producer(VertexId v) const {
    for (const auto& [id, e] : edges)
      if (e.dst == v) return &e;
    return nullptr;
  }

  /// Number of edges that are not empty placeholders.
  [[nodiscard]] std::size_t real_operator_count() const {
    return static_cast<std::size_t>(std::count_if(
        edges.begin(), edges.end(), [](const auto& kv) { return !is_placeholder(kv.second.kind); }));
  }

  VertexId add_vertex(TensorSpec s) {
    const VertexId id = next_vertex_id();
    vertices.emplace(id, std::move(s));
    return id;
  }

  EdgeId add_edge(std::vector<VertexId> srcs, VertexId dst, OperatorKind kind, std::uint64_t weight_seed) {
    const EdgeId id = next_edge_id();
    edges.emplace(id, Edge{id, std::move(srcs), dst, std::move(kind), weight_seed});
    return id;
  }

  friend bool operator==(const ModelGraph&, const ModelGraph&) = default;
};

// --- shape rules --------------------------------------------------------------

/// Output spec of `kind` applied to `srcs`, or an explanation of why the
/// operator does not apply. Adapter has no intrinsic output shape and is
/// checked separately.
inline std::variant<TensorSpec, std::string> infer_output(const OperatorKind& kind,
                                                          std::span<const TensorSpec> srcs) {
  using Result = std::variant<TensorSpec, std::string>;
  if (srcs.empty()) return Result{std::string("operator has no sources")};
  const TensorSpec& x = srcs[0];
  for (const auto& s : srcs)
    if (s.dtype != x.dtype) return Result{std::string("source dtypes differ")};

  auto single = [&]() -> std::optional<std::string> {
    if (srcs.size() != 1) return std::string(kind_name(kind)) + " takes exactly one source";
    return std::nullopt;
  };
  auto recurrent = [&](int hidden, bool bidir) -> Result {
    if (auto err = single()) return *err;
    if (x.rank() != 3) return std::string("recurrent operator expects (time, batch, feature), got ") + shape_string(x.shape);
    if (hidden < 1) return std::string("hidden size must be >= 1");
    return TensorSpec{{x.shape[0], x.shape[1], static_cast<std::int64_t>(hidden) * (bidir ? 2 : 1)}, x.dtype};
  };

  return std::visit(
      [&](const auto& k) -> Result {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, GemmConv>) {
          if (auto err = single()) return *err;
          if (x.rank() != 3) return std::string("convolution expects (H, W, C), got ") + shape_string(x.shape);
          if (k.kernel < 1 || x.shape[0] < k.kernel || x.shape[1] < k.kernel)
            return std::string("kernel ") + std::to_string(k.kernel) + " does not fit " + shape_string(x.shape);
          const std::int64_t c_out = k.variant == ConvVariant::depthwise ? x.shape[2] : k.out_channels;
          if (c_out < 1) return std::string("out_channels must be >= 1");
          return TensorSpec{{x.shape[0] - k.kernel + 1, x.shape[1] - k.kernel + 1, c_out}, x.dtype};
        } else if constexpr (std::is_same_v<K, MatMul>) {
          if (srcs.size() == 2) {
            const TensorSpec& b = srcs[1];
            if (x.rank() != 2 || b.rank() != 2) return std::string("two-source matmul expects rank-2 operands");
            if (x.shape[1] != b.shape[0])
              return std::string("inner dimensions disagree: ") + shape_string(x.shape) + " x " + shape_string(b.shape);
            return TensorSpec{{x.shape[0], b.shape[1]}, x.dtype};
          }
          if (srcs.size() != 1) return std::string("matmul takes one or two sources");
          if (x.rank() < 2) return std::string("matmul expects rank >= 2");
          if (k.out_features < 1) return std::string("out_features must be >= 1");
          Shape s = x.shape;
          s.back() = k.out_features;
          return TensorSpec{s, x.dtype};
        } else if constexpr (std::is_same_v<K, Rnn>) {
          return recurrent(k.hidden, k.direction == RnnDirection::bi);
        } else if constexpr (std::is_same_v<K, Lstm> || std::is_same_v<K, Gru>) {
          return recurrent(k.hidden, k.bidirectional);
        } else if constexpr (std::is_same_v<K, Elementwise>) {
          if (k.op == ElementwiseOp::relu) {
            if (auto err = single()) return *err;
            return x;
          }
          if (srcs.size() > 2) return std::string("elementwise binary op takes one or two sources");
          if (srcs.size() == 2 && srcs[1].shape != x.shape) return std::string("elementwise operand shapes differ");
          return x;
        } else if constexpr (std::is_same_v<K, Dense>) {
          if (auto err = single()) return *err;
          if (k.out_features < 1) return std::string("out_features must be >= 1");
          Shape s = x.shape;
          s.back() = k.out_features;
          return TensorSpec{s, x.dtype};
        } else if constexpr (std::is_same_v<K, Adapter>) {
          if (auto err = single()) return *err;
          return std::string("adapter output is defined by its target");
        } else {
          // Pool, BatchNorm, NonePlaceholder: shape preserving.
          if (auto err = single()) return *err;
          return x;
        }
      },
      kind);
}

/// True when `kind` maps `srcs` exactly onto `dst`.
inline bool shape_consistent(const OperatorKind& kind, std::span<const TensorSpec> srcs, const TensorSpec& dst) {
  if (std::holds_alternative<Adapter>(kind)) return srcs.size() == 1 && srcs[0].dtype == dst.dtype;
  auto r = infer_output(kind, srcs);
  const auto* out = std::get_if<TensorSpec>(&r);
  return out && *out == dst;
}

// --- validation and ordering -------------------------------------------------

namespace detail {

inline std::map<VertexId, std::vector<VertexId>> successors(const ModelGraph& g) {
  std::map<VertexId, std::vector<VertexId>> succ;
  for (const auto& [id, e] : g.edges)
    for (auto s : e.srcs) succ[s].push_back(e.dst);
  return succ;
}

inline std::set<VertexId> reach(const std::map<VertexId, std::vector<VertexId>>& adj,
                                const std::vector<VertexId>& roots) {
  std::set<VertexId> seen(roots.begin(), roots.end());
  std::vector<VertexId> stack(roots.begin(), roots.end());
  while (!stack.empty()) {
    const VertexId v = stack.back();
    stack.pop_back();
    auto it = adj.find(v);
    if (it == adj.end()) continue;
    for (auto w : it->second)
      if (seen.insert(w).second) stack.push_back(w);
  }
  return seen;
}

}  // namespace detail

/// Vertices reachable from `from` along edge direction (including `from`).
inline std::set<VertexId> descendants(const ModelGraph& g, VertexId from) {
  return detail::reach(detail::successors(g), {from});
}

/// Empty when the graph is well formed; otherwise one line per violation,
/// each prefixed by its class ("structure", "cycle", "connectivity", "shape").
inline std::vector<std::string> validate(const ModelGraph& g) {
  std::vector<std::string> out;
  auto violation = [&](std::string_view cls, const std::string& msg) {
    out.push_back(std::string(cls) + ": " + msg);
  };

  for (const auto& [id, spec] : g.vertices)
    if (!spec.valid()) violation("structure", "vertex " + std::to_string(id) + " has invalid shape " + shape_string(spec.shape));

  if (g.inputs.empty()) violation("structure", "graph has no inputs");
  std::set<VertexId> input_set;
  for (const auto& in : g.inputs) {
    if (!g.vertices.count(in.vertex)) violation("structure", "input vertex " + std::to_string(in.vertex) + " does not exist");
    if (!input_set.insert(in.vertex).second) violation("structure", "duplicate input vertex " + std::to_string(in.vertex));
  }
  if (!g.vertices.count(g.output)) violation("structure", "output vertex " + std::to_string(g.output) + " does not exist");

  std::map<VertexId, int> producers;
  bool dangling = false;
  for (const auto& [id, e] : g.edges) {
    if (e.id != id) violation("structure", "edge key " + std::to_string(id) + " disagrees with id " + std::to_string(e.id));
    if (e.srcs.empty()) violation("structure", "edge " + std::to_string(id) + " has no sources");
    for (auto s : e.srcs)
      if (!g.vertices.count(s)) {
        violation("structure", "edge " + std::to_string(id) + " reads missing vertex " + std::to_string(s));
        dangling = true;
      }
    if (!g.vertices.count(e.dst)) {
      violation("structure", "edge " + std::to_string(id) + " writes missing vertex " + std::to_string(e.dst));
      dangling = true;
    }
    if (input_set.count(e.dst)) violation("structure", "edge " + std::to_string(id) + " writes input vertex " + std::to_string(e.dst));
    ++producers[e.dst];
  }
  for (const auto& [v, spec] : g.vertices) {
    const int n = producers.count(v) ? producers[v] : 0;
    if (n > 1) violation("structure", "vertex " + std::to_string(v) + " has " + std::to_string(n) + " producers");
    if (n == 0 && !input_set.count(v)) violation("structure", "vertex " + std::to_string(v) + " is neither an input nor produced");
  }

  // Cycle check (Kahn over vertices).
  {
    std::map<VertexId, int> indeg;
    for (const auto& [v, s] : g.vertices) indeg[v] = 0;
    for (const auto& [id, e] : g.edges)
      for (auto s : e.srcs) {
        (void)s;
        ++indeg[e.dst];
      }
    auto succ = detail::successors(g);
    std::vector<VertexId> ready;
    for (const auto& [v, d] : indeg)
      if (d == 0) ready.push_back(v);
    std::size_t visited = 0;
    while (!ready.empty()) {
      const VertexId v = ready.back();
      ready.pop_back();
      ++visited;
      for (auto w : succ[v])
        if (--indeg[w] == 0) ready.push_back(w);
    }
    if (visited != indeg.size()) violation("cycle", "graph contains a directed cycle");
  }

  if (!dangling && g.vertices.count(g.output)) {
    std::vector<VertexId> roots;
    for (const auto& in : g.inputs) roots.push_back(in.vertex);
    const auto fwd = detail::reach(detail::successors(g), roots);
    std::map<VertexId, std::vector<VertexId>> pred;
    for (const auto& [id, e] : g.edges)
      for (auto s : e.srcs) pred[e.dst].push_back(s);
    const auto bwd = detail::reach(pred, {g.output});
    for (const auto& [v, s] : g.vertices) {
      if (!fwd.count(v)) violation("connectivity", "vertex " + std::to_string(v) + " is unreachable from the inputs");
      if (!bwd.count(v)) violation("connectivity", "vertex " + std::to_string(v) + " does not reach the output");
    }
  }

  if (!dangling) {
    for (const auto& [id, e] : g.edges) {
      if (e.srcs.empty()) continue;
      std::vector<TensorSpec> in;
      for (auto s : e.srcs) in.push_back(g.spec(s));
      if (!shape_consistent(e.kind, in, g.spec(e.dst))) {
        std::string why;
        if (!std::holds_alternative<Adapter>(e.kind)) {
          auto r = infer_output(e.kind, in);
          if (auto* err = std::get_if<std::string>(&r))
            why = *err;
          else
            why = "expected " + shape_string(std::get<TensorSpec>(r).shape) + ", target is " +
                  shape_string(g.spec(e.dst).shape);
        } else {
          why = "adapter dtype mismatch";
        }
        violation("shape", "edge " + std::to_string(id) + " (" + std::string(kind_name(e.kind)) + "): " + why);
      }
    }
  }
  return out;
}

inline bool is_valid(const ModelGraph& g) { return validate(g).empty(); }

/// Edges in dependency order; ties go to the smaller edge id.
/// Throws std::runtime_error on a cyclic graph.
inline std::vector<EdgeId> topo_order(const ModelGraph& g) {
  std::map<VertexId, EdgeId> producer;
  for (const auto& [id, e] : g.edges) producer[e.dst] = id;

  std::map<EdgeId, int> pending;  // unresolved produced sources per edge
  std::map<EdgeId, std::vector<EdgeId>> consumers;
  for (const auto& [id, e] : g.edges) {
    std::set<EdgeId> deps;
    for (auto s : e.srcs) {
      auto it = producer.find(s);
      if (it != producer.end()) deps.insert(it->second);
    }
    pending[id] = static_cast<int>(deps.size());
    for (auto d : deps) consumers[d].push_back(id);
  }

  std::priority_queue<EdgeId, std::vector<EdgeId>, std::greater<>> ready;
  for (const auto& [id, n] : pending)
    if (n == 0) ready.push(id);

  std::vector<EdgeId> order;
  order.reserve(g.edges.size());
  while (!ready.empty()) {
    const EdgeId id = ready.top();
    ready.pop();
    order.push_back(id);
    for (auto c : consumers[id])
      if (--pending[c] == 0) ready.push(c);
  }
  if (order.size() != g.edges.size()) throw std::runtime_error("topo_order: graph contains a cycle");
  return order;
}

// --- coverage ---------------------------------------------------------------

struct Coverage {
  double operator_coverage = 0.0;
  double temp_sensitive_coverage = 0.0;
};

inline std::set<OpCategory> categories_in(const ModelGraph& g) {
  std::set<OpCategory> out;
  for (const auto& [id, e] : g.edges)
    for (auto c : categories_of(e.kind)) out.insert(c);
  return out;
}

/// Fraction of `universe` exercised by `hit`; the second value restricts both
/// sides to temperature-sensitive categories (0 when the universe has none).
inline Coverage coverage_of(const std::set<OpCategory>& hit, std::span<const OpCategory> universe) {
  if (universe.empty()) throw std::invalid_argument("coverage: universe must be nonempty");
  const std::set<OpCategory> uni(universe.begin(), universe.end());
  std::size_t covered = 0, sensitive = 0, sensitive_covered = 0;
  for (auto c : uni) {
    const bool h = hit.count(c) > 0;
    covered += h;
    if (category_sensitive(c)) {
      ++sensitive;
      sensitive_covered += h;
    }
  }
  Coverage cov;
  cov.operator_coverage = static_cast<double>(covered) / static_cast<double>(uni.size());
  cov.temp_sensitive_coverage =
      sensitive == 0 ? 0.0 : static_cast<double>(sensitive_covered) / static_cast<double>(sensitive);
  return cov;
}

inline Coverage coverage(std::span<const ModelGraph> corpus, std::span<const OpCategory> universe) {
  std::set<OpCategory> hit;
  for (const auto& g : corpus) {
    auto c = categories_in(g);
    hit.insert(c.begin(), c.end());
  }
  return coverage_of(hit, universe);
}

// --- graph file format -------------------------------------------------------

namespace detail {

inline std::string_view to_string(ConvVariant v) {
  switch (v) {
    case ConvVariant::standard: return "standard";
    case ConvVariant::depthwise: return "depthwise";
    case ConvVariant::separable: return "separable";
  }
  return "?";
}

inline ConvVariant conv_variant_from(std::string_view s) {
  if (s == "standard") return ConvVariant::standard;
  if (s == "depthwise") return ConvVariant::depthwise;
  if (s == "separable") return ConvVariant::separable;
  throw std::invalid_argument("unknown conv variant: " + std::string(s));
}

inline LayerCount layers_from(std::string_view s) {
  if (s == "single") return LayerCount::single;
  if (s == "multi") return LayerCount::multi;
  throw std::invalid_argument("unknown layer count: " + std::string(s));
}

inline std::string_view to_string(LayerCount l) { return l == LayerCount::single ? "single" : "multi"; }

}  // namespace detail

inline nlohmann::ordered_json kind_params_to_json(const OperatorKind& kind) {
  nlohmann::ordered_json p = nlohmann::ordered_json::object();
  std::visit(
      [&](const auto& k) {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, GemmConv>) {
          p["variant"] = detail::to_string(k.variant);
          p["precision"] = to_string(k.precision);
          p["gemm"] = k.gemm;
          p["kernel"] = k.kernel;
          p["out_channels"] = k.out_channels;
        } else if constexpr (std::is_same_v<K, MatMul>) {
          p["precision"] = to_string(k.precision);
          p["out_features"] = k.out_features;
        } else if constexpr (std::is_same_v<K, Rnn>) {
          p["direction"] = k.direction == RnnDirection::uni ? "uni" : "bi";
          p["hidden"] = k.hidden;
        } else if constexpr (std::is_same_v<K, Lstm> || std::is_same_v<K, Gru>) {
          p["layers"] = detail::to_string(k.layers);
          p["bidirectional"] = k.bidirectional;
          p["hidden"] = k.hidden;
        } else if constexpr (std::is_same_v<K, Dense>) {
          p["out_features"] = k.out_features;
        }
      },
      kind);
  return p;
}

inline OperatorKind kind_from_json(std::string_view name, const nlohmann::json& p) {
  auto get_or = [&](const char* key, auto fallback) {
    using T = decltype(fallback);
    return p.contains(key) ? p.at(key).get<T>() : fallback;
  };
  if (name == "gemm_conv") {
    GemmConv k;
    k.variant = detail::conv_variant_from(p.at("variant").get<std::string>());
    k.precision = precision_from_string(p.at("precision").get<std::string>());
    k.gemm = get_or("gemm", true);
    k.kernel = p.at("kernel").get<int>();
    k.out_channels = get_or("out_channels", 0);
    return k;
  }
  if (name == "matmul") {
    return MatMul{precision_from_string(p.at("precision").get<std::string>()), get_or("out_features", 0)};
  }
  if (name == "rnn") {
    const auto dir = p.at("direction").get<std::string>();
    if (dir != "uni" && dir != "bi") throw std::invalid_argument("unknown rnn direction: " + dir);
    return Rnn{dir == "uni" ? RnnDirection::uni : RnnDirection::bi, p.at("hidden").get<int>()};
  }
  if (name == "lstm")
    return Lstm{detail::layers_from(p.at("layers").get<std::string>()), p.at("bidirectional").get<bool>(),
                p.at("hidden").get<int>()};
  if (name == "gru")
    return Gru{detail::layers_from(p.at("layers").get<std::string>()), p.at("bidirectional").get<bool>(),
               p.at("hidden").get<int>()};
  if (name == "relu") return Elementwise{ElementwiseOp::relu};
  if (name == "add") return Elementwise{ElementwiseOp::add};
  if (name == "mul") return Elementwise{ElementwiseOp::mul};
  if (name == "dense") return Dense{p.at("out_features").get<int>()};
  if (name == "max_pool") return Pool{PoolMode::max};
  if (name == "avg_pool") return Pool{PoolMode::avg};
  if (name == "batch_norm") return BatchNorm{};
  if (name == "none") return NonePlaceholder{};
  if (name == "adapter") return Adapter{};
  throw std::invalid_argument("unknown operator kind: " + std::string(name));
}

inline nlohmann::ordered_json graph_to_json(const ModelGraph& g) {
  nlohmann::ordered_json j;
  j["name"] = g.name;
  j["vertices"] = nlohmann::ordered_json::array();
  for (const auto& [id, spec] : g.vertices) {
    nlohmann::ordered_json v;
    v["id"] = id;
    v["shape"] = spec.shape;
    v["dtype"] = to_string(spec.dtype);
    j["vertices"].push_back(std::move(v));
  }
  j["edges"] = nlohmann::ordered_json::array();
  for (const auto& [id, e] : g.edges) {
    nlohmann::ordered_json ej;
    ej["id"] = id;
    ej["srcs"] = e.srcs;
    ej["dst"] = e.dst;
    ej["kind"] = kind_name(e.kind);
    ej["params"] = kind_params_to_json(e.kind);
    ej["weight_seed"] = e.weight_seed;
    j["edges"].push_back(std::move(ej));
  }
  j["inputs"] = nlohmann::ordered_json::array();
  for (const auto& in : g.inputs) {
    nlohmann::ordered_json ij;
    ij["vertex"] = in.vertex;
    ij["modality"] = to_string(in.modality);
    j["inputs"].push_back(std::move(ij));
  }
  j["output"] = g.output;
  return j;
}

inline ModelGraph graph_from_json(const nlohmann::json& j) {
  ModelGraph g;
  g.name = j.value("name", std::string{});
  for (const auto& v : j.at("vertices")) {
    TensorSpec s{v.at("shape").get<Shape>(), dtype_from_string(v.at("dtype").get<std::string>())};
    if (!g.vertices.emplace(v.at("id").get<VertexId>(), std::move(s)).second)
      throw std::invalid_argument("duplicate vertex id in graph file");
  }
  for (const auto& ej : j.at("edges")) {
    Edge e;
    e.id = ej.at("id").get<EdgeId>();
    e.srcs = ej.at("srcs").get<std::vector<VertexId>>();
    e.dst = ej.at("dst").get<VertexId>();
    e.kind = kind_from_json(ej.at("kind").get<std::string>(), ej.value("params", nlohmann::json::object()));
    e.weight_seed = ej.at("weight_seed").get<std::uint64_t>();
    if (!g.edges.emplace(e.id, e).second) throw std::invalid_argument("duplicate edge id in graph file");
  }
  for (const auto& ij : j.at("inputs"))
    g.inputs.push_back(GraphInput{ij.at("vertex").get<VertexId>(), modality_from_string(ij.value("modality", "generic"))});
  g.output = j.at("output").get<VertexId>();
  return g;
}

inline std::string graph_to_string(const ModelGraph& g) { return graph_to_json(g).dump(); }

/// Stable 64-bit identity of a graph's content (name excluded).
inline std::uint64_t content_hash(const ModelGraph& g) {
  auto j = graph_to_json(g);
  j.erase("name");
  return fnv1a64(j.dump());
}

inline void save_graph(const ModelGraph& g, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write graph file: " + path.string());
  out << graph_to_json(g).dump(2) << '\n';
}

inline ModelGraph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open graph file: " + path.string());
  return graph_from_json(nlohmann::json::parse(in));
}

}  // namespace thermalfuzz
