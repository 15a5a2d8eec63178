#pragma once

// The eight temperature-targeted mutation rules.
//
// Insertion rules (1, 2, 5, 6, 7) pick a source vertex u and a merge vertex v
// that does not reach u. The new operator reads u; its result is adapted to
// v's shape when needed and added onto v's original value:
//
//   before:  ... --e--> v
//   after:   ... --e--> v0 --+
//            u --op--> w [--adapter--> w'] --+--add--> v
//
// Replacement rules (3, 4, 8) rewrite one edge's kind in place. For rule 8 an
// empty placeholder edge turned into a real operator is an insertion, and a
// real operator turned into a placeholder is a removal.

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "thermalfuzz/model_ir.hpp"
#include "thermalfuzz/rng.hpp"

namespace thermalfuzz {

enum class MutationRule : int {
  gemm_conv_insertion = 1,
  matmul_insertion = 2,
  high_precision_replacement = 3,
  mixed_precision_replacement = 4,
  rnn_insertion = 5,
  lstm_insertion = 6,
  gru_insertion = 7,
  random_operator_replacement = 8,
};

inline constexpr int kRuleCount = 8;

inline constexpr std::array<MutationRule, kRuleCount> kAllRules = {
    MutationRule::gemm_conv_insertion,         MutationRule::matmul_insertion,
    MutationRule::high_precision_replacement,  MutationRule::mixed_precision_replacement,
    MutationRule::rnn_insertion,               MutationRule::lstm_insertion,
    MutationRule::gru_insertion,               MutationRule::random_operator_replacement,
};

inline constexpr int rule_index(MutationRule r) { return static_cast<int>(r) - 1; }

inline MutationRule rule_from_id(int id) {
  if (id < 1 || id > kRuleCount) throw std::out_of_range("mutation rule id must be in 1..8");
  return static_cast<MutationRule>(id);
}

inline std::string_view rule_name(MutationRule r) {
  switch (r) {
    case MutationRule::gemm_conv_insertion: return "GEMM Convolution Insertion";
    case MutationRule::matmul_insertion: return "MatMul Product Insertion";
    case MutationRule::high_precision_replacement: return "High Precision Operator Replacement";
    case MutationRule::mixed_precision_replacement: return "Mix Precision Operator Replacement";
    case MutationRule::rnn_insertion: return "Recurrent Neural Network (RNN) Insertion";
    case MutationRule::lstm_insertion: return "Long Short-Term Memory (LSTM) Insertion";
    case MutationRule::gru_insertion: return "Gated Recurrent Unit (GRU) Insertion";
    case MutationRule::random_operator_replacement: return "Random Operator Replacement (ROR)";
  }
  return "?";
}

/// Rules 1-7 produce temperature-sensitive operators; rule 8 does not.
inline constexpr bool targets_sensitive(MutationRule r) { return r != MutationRule::random_operator_replacement; }

inline constexpr bool is_insertion(MutationRule r) {
  switch (r) {
    case MutationRule::gemm_conv_insertion:
    case MutationRule::matmul_insertion:
    case MutationRule::rnn_insertion:
    case MutationRule::lstm_insertion:
    case MutationRule::gru_insertion: return true;
    default: return false;
  }
}

/// Where a rule applies: a (source, merge) vertex pair for insertions, an
/// edge for replacements.
struct MutationSite {
  MutationRule rule = MutationRule::gemm_conv_insertion;
  VertexId source = -1;
  VertexId merge = -1;
  EdgeId edge = -1;

  friend bool operator==(const MutationSite&, const MutationSite&) = default;
};

inline std::string site_string(const MutationSite& s) {
  if (is_insertion(s.rule)) return "u=" + std::to_string(s.source) + ",v=" + std::to_string(s.merge);
  return "edge=" + std::to_string(s.edge);
}

class NoEligibleSite : public std::runtime_error {
 public:
  explicit NoEligibleSite(MutationRule r)
      : std::runtime_error("no eligible site for rule " + std::to_string(static_cast<int>(r)) + " (" +
                           std::string(rule_name(r)) + ")"),
        rule_(r) {}
  [[nodiscard]] MutationRule rule() const { return rule_; }

 private:
  MutationRule rule_;
};

struct MutationResult {
  ModelGraph graph;
  MutationSite site;
  std::string detail;  ///< inserted or substituted operator, for the event log
};

namespace detail {

/// Whether the operator inserted by `rule` can read a tensor of this spec.
inline bool accepts_source(MutationRule rule, const TensorSpec& s) {
  switch (rule) {
    case MutationRule::gemm_conv_insertion:
    case MutationRule::rnn_insertion:
    case MutationRule::lstm_insertion:
    case MutationRule::gru_insertion: return s.rank() == 3;
    case MutationRule::matmul_insertion: return s.rank() >= 2;
    default: return false;
  }
}

/// Non-sensitive kinds rule 8 may substitute, placeholder included.
inline std::vector<OperatorKind> replacement_candidates(std::int64_t features) {
  return {NonePlaceholder{},
          Elementwise{ElementwiseOp::relu},
          Elementwise{ElementwiseOp::add},
          Elementwise{ElementwiseOp::mul},
          Dense{static_cast<int>(features)},
          Pool{PoolMode::max},
          Pool{PoolMode::avg},
          BatchNorm{}};
}

inline bool rule8_site(const ModelGraph& g, const Edge& e) {
  if (temperature_sensitive(e.kind) || std::holds_alternative<Adapter>(e.kind)) return false;
  if (e.srcs.size() != 1) return false;
  return g.spec(e.srcs[0]) == g.spec(e.dst);
}

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& items) {
  return items[rng.below(items.size())];
}

}  // namespace detail

/// Every position where `rule` applies, in a deterministic order.
inline std::vector<MutationSite> eligible_sites(const ModelGraph& g, MutationRule rule) {
  std::vector<MutationSite> sites;
  if (is_insertion(rule)) {
    std::map<VertexId, std::set<VertexId>> below;
    for (const auto& [v, spec] : g.vertices)
      if (!g.is_input(v)) below.emplace(v, descendants(g, v));
    for (const auto& [u, su] : g.vertices) {
      if (!detail::accepts_source(rule, su)) continue;
      for (const auto& [v, reach] : below) {
        if (v == u || reach.count(u) || g.spec(v).dtype != su.dtype) continue;
        sites.push_back(MutationSite{rule, u, v, -1});
      }
    }
    return sites;
  }
  for (const auto& [id, e] : g.edges) {
    bool ok = false;
    switch (rule) {
      case MutationRule::high_precision_replacement: {
        auto p = precision_of(e.kind);
        ok = p && *p != Precision::fp32;
        break;
      }
      case MutationRule::mixed_precision_replacement: {
        auto p = precision_of(e.kind);
        ok = p && *p != Precision::mixed_int8_fp16;
        break;
      }
      case MutationRule::random_operator_replacement: ok = detail::rule8_site(g, e); break;
      default: break;
    }
    if (ok) sites.push_back(MutationSite{rule, -1, -1, id});
  }
  return sites;
}

/// Applies `rule` at a uniformly drawn eligible site. A pure function of its
/// arguments. Throws NoEligibleSite when the rule has nowhere to apply.
inline MutationResult mutate(const ModelGraph& g, MutationRule rule, std::uint64_t rng_seed) {
  const auto sites = eligible_sites(g, rule);
  if (sites.empty()) throw NoEligibleSite(rule);
  Rng rng(rng_seed);
  const MutationSite site = sites[rng.below(sites.size())];
  MutationResult res{g, site, {}};
  ModelGraph& out = res.graph;

  if (is_insertion(rule)) {
    const TensorSpec su = g.spec(site.source);
    const TensorSpec sv = g.spec(site.merge);
    OperatorKind kind;
    const std::vector<Precision> low = {Precision::int8, Precision::fp16};
    const std::vector<int> hidden_sizes = {4, 8};
    switch (rule) {
      case MutationRule::gemm_conv_insertion: {
        GemmConv c;
        c.variant = detail::pick(rng, std::vector<ConvVariant>{ConvVariant::standard, ConvVariant::depthwise,
                                                                ConvVariant::separable});
        c.precision = detail::pick(rng, low);
        c.gemm = true;
        const bool fits3 = su.shape[0] >= 3 && su.shape[1] >= 3;
        c.kernel = fits3 ? detail::pick(rng, std::vector<int>{1, 3}) : 1;
        c.out_channels = detail::pick(rng, std::vector<int>{2, 4, 8});
        kind = c;
        break;
      }
      case MutationRule::matmul_insertion:
        kind = MatMul{detail::pick(rng, low), detail::pick(rng, std::vector<int>{4, 8})};
        break;
      case MutationRule::rnn_insertion:
        kind = Rnn{detail::pick(rng, std::vector<RnnDirection>{RnnDirection::uni, RnnDirection::bi}),
                   detail::pick(rng, hidden_sizes)};
        break;
      case MutationRule::lstm_insertion:
      case MutationRule::gru_insertion: {
        // single-layer, multi-layer, bidirectional
        const int variant = static_cast<int>(rng.below(3));
        const LayerCount layers = variant == 1 ? LayerCount::multi : LayerCount::single;
        const bool bidir = variant == 2;
        const int hidden = detail::pick(rng, hidden_sizes);
        if (rule == MutationRule::lstm_insertion)
          kind = Lstm{layers, bidir, hidden};
        else
          kind = Gru{layers, bidir, hidden};
        break;
      }
      default: throw std::logic_error("unreachable");
    }
    const std::vector<TensorSpec> in{su};
    const TensorSpec w_spec = std::get<TensorSpec>(infer_output(kind, in));

    const Edge* prod = g.producer(site.merge);
    if (!prod) throw std::logic_error("merge vertex has no producer");
    const VertexId v0 = out.add_vertex(sv);
    out.edges.at(prod->id).dst = v0;
    const VertexId w = out.add_vertex(w_spec);
    out.add_edge({site.source}, w, kind, rng.fork());
    VertexId merged = w;
    if (w_spec.shape != sv.shape) {
      merged = out.add_vertex(sv);
      out.add_edge({w}, merged, Adapter{}, rng.fork());
    }
    out.add_edge({v0, merged}, site.merge, Elementwise{ElementwiseOp::add}, rng.fork());
    res.detail = std::string(kind_name(kind)) + " " + kind_params_to_json(kind).dump();
    return res;
  }

  Edge& e = out.edges.at(site.edge);
  switch (rule) {
    case MutationRule::high_precision_replacement:
    case MutationRule::mixed_precision_replacement: {
      const Precision target =
          rule == MutationRule::high_precision_replacement ? Precision::fp32 : Precision::mixed_int8_fp16;
      if (auto* c = std::get_if<GemmConv>(&e.kind)) c->precision = target;
      if (auto* m = std::get_if<MatMul>(&e.kind)) m->precision = target;
      res.detail = std::string(kind_name(e.kind)) + " -> " + std::string(to_string(target));
      break;
    }
    case MutationRule::random_operator_replacement: {
      const std::string before(kind_name(e.kind));
      std::vector<OperatorKind> candidates;
      for (auto& k : detail::replacement_candidates(g.spec(e.dst).shape.back()))
        if (kind_name(k) != before) candidates.push_back(std::move(k));
      e.kind = detail::pick(rng, candidates);
      e.weight_seed = rng.fork();
      res.detail = before + " -> " + std::string(kind_name(e.kind));
      break;
    }
    default: throw std::logic_error("unreachable");
  }
  return res;
}

inline ModelGraph apply_rule(const ModelGraph& g, MutationRule rule, std::uint64_t rng_seed) {
  return mutate(g, rule, rng_seed).graph;
}

}  // namespace thermalfuzz
