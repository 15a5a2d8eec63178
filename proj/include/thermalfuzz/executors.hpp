#pragma once

// Reference and thermally-degraded graph interpreters.
//
// Both walk the graph in topological order through the same kernels. The
// degraded executor additionally runs a simulated thermal clock: before each
// operator it reads the temperature and frequency ratio r, charges
// op_cost / r seconds of simulated time, and applies three fault classes
// when r is low enough:
//   latency    accumulated time beyond the budget -> Timeout
//   precision  fp32/mixed results keep floor(23 r / r_crit) mantissa bits,
//              or become NaN when that is zero (only while r < r_crit)
//   jitter     recurrent steps skip their state update with probability
//              jitter_gain * (r_jitter - r) (only while r < r_jitter)
// With r == 1 none of these fire and the result equals the reference.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "thermalfuzz/dvfs.hpp"
#include "thermalfuzz/kernels.hpp"
#include "thermalfuzz/model_ir.hpp"
#include "thermalfuzz/rng.hpp"
#include "thermalfuzz/thermal.hpp"

namespace thermalfuzz {

enum class TraceStatus { ok, crash, timeout };

inline std::string_view to_string(TraceStatus s) {
  switch (s) {
    case TraceStatus::ok: return "ok";
    case TraceStatus::crash: return "crash";
    case TraceStatus::timeout: return "timeout";
  }
  return "?";
}

namespace events {
inline constexpr std::string_view kExec = "exec";
inline constexpr std::string_view kMantissaTruncation = "mantissa_truncation";
inline constexpr std::string_view kNanForced = "nan_forced";
inline constexpr std::string_view kJitterSkip = "jitter_skip";
inline constexpr std::string_view kTimeout = "timeout";
inline constexpr std::string_view kInternalError = "internal_error";
}  // namespace events

/// One structured executor log line.
struct LogLine {
  std::string case_id;
  EdgeId op_id = -1;
  std::string kind;
  std::string event;
  double temperature = 0.0;
  double ratio = 1.0;
  double t_sim = 0.0;
  std::string detail;

  friend bool operator==(const LogLine&, const LogLine&) = default;
};

struct ExecutionTrace {
  TraceStatus status = TraceStatus::ok;
  std::string crash_reason;     ///< set when status == crash
  std::vector<Tensor> outputs;  ///< present iff status == ok
  double sim_wall_time = 0.0;
  std::vector<LogLine> log;

  [[nodiscard]] bool ok() const { return status == TraceStatus::ok; }
};

inline bool bit_identical(const ExecutionTrace& a, const ExecutionTrace& b) {
  if (a.status != b.status || a.crash_reason != b.crash_reason || a.outputs.size() != b.outputs.size()) return false;
  for (std::size_t i = 0; i < a.outputs.size(); ++i)
    if (!bit_identical(a.outputs[i], b.outputs[i])) return false;
  return true;
}

/// Fault lines only (everything but per-operator exec lines).
inline std::size_t fault_event_count(const ExecutionTrace& t) {
  std::size_t n = 0;
  for (const auto& l : t.log) n += l.event != events::kExec;
  return n;
}

inline void stamp_case(ExecutionTrace& t, const std::string& case_id) {
  for (auto& l : t.log) l.case_id = case_id;
}

enum class CostClass { compute_intensive, recurrent, other };

inline CostClass cost_class(const OperatorKind& kind) {
  if (is_recurrent(kind)) return CostClass::recurrent;
  if (auto* c = std::get_if<GemmConv>(&kind)) return c->gemm ? CostClass::compute_intensive : CostClass::other;
  if (std::holds_alternative<MatMul>(kind)) return CostClass::compute_intensive;
  return CostClass::other;
}

struct FaultConfig {
  double timeout_budget = 10.0;  ///< simulated seconds
  double r_crit = 0.95;
  double r_jitter = 0.92;
  double jitter_gain = 2.0;
  double cost_compute_intensive = 0.05;
  double cost_recurrent = 0.05;
  double cost_other = 0.005;

  void validate() const {
    if (!(timeout_budget > 0.0)) throw std::invalid_argument("FaultConfig: timeout_budget must be > 0");
    if (!(r_crit > 0.0 && r_crit <= 1.0)) throw std::invalid_argument("FaultConfig: r_crit must be in (0, 1]");
    if (!(r_jitter > 0.0 && r_jitter <= 1.0)) throw std::invalid_argument("FaultConfig: r_jitter must be in (0, 1]");
    if (!(jitter_gain >= 0.0)) throw std::invalid_argument("FaultConfig: jitter_gain must be >= 0");
    if (!(cost_compute_intensive > 0.0 && cost_recurrent > 0.0 && cost_other > 0.0))
      throw std::invalid_argument("FaultConfig: operator costs must be > 0");
  }

  [[nodiscard]] double op_cost(const OperatorKind& kind) const {
    switch (cost_class(kind)) {
      case CostClass::compute_intensive: return cost_compute_intensive;
      case CostClass::recurrent: return cost_recurrent;
      case CostClass::other: return cost_other;
    }
    return cost_other;
  }

  friend bool operator==(const FaultConfig&, const FaultConfig&) = default;
};

inline nlohmann::ordered_json fault_config_to_json(const FaultConfig& f) {
  nlohmann::ordered_json j;
  j["timeout_budget"] = f.timeout_budget;
  j["r_crit"] = f.r_crit;
  j["r_jitter"] = f.r_jitter;
  j["jitter_gain"] = f.jitter_gain;
  j["op_cost"] = {{"compute_intensive", f.cost_compute_intensive},
                  {"recurrent", f.cost_recurrent},
                  {"other", f.cost_other}};
  return j;
}

inline FaultConfig fault_config_from_json(const nlohmann::json& j) {
  FaultConfig f;
  f.timeout_budget = j.value("timeout_budget", f.timeout_budget);
  f.r_crit = j.value("r_crit", f.r_crit);
  f.r_jitter = j.value("r_jitter", f.r_jitter);
  f.jitter_gain = j.value("jitter_gain", f.jitter_gain);
  if (j.contains("op_cost")) {
    const auto& c = j.at("op_cost");
    f.cost_compute_intensive = c.value("compute_intensive", f.cost_compute_intensive);
    f.cost_recurrent = c.value("recurrent", f.cost_recurrent);
    f.cost_other = c.value("other", f.cost_other);
  }
  f.validate();
  return f;
}

inline FaultConfig load_fault_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open fault config: " + path.string());
  return fault_config_from_json(nlohmann::json::parse(in));
}

inline nlohmann::ordered_json log_line_to_json(const LogLine& l) {
  nlohmann::ordered_json j;
  j["case"] = l.case_id;
  j["op"] = l.op_id;
  j["kind"] = l.kind;
  j["event"] = l.event;
  j["T"] = l.temperature;
  j["r"] = l.ratio;
  j["t_sim"] = l.t_sim;
  if (!l.detail.empty()) j["detail"] = l.detail;
  return j;
}

inline LogLine log_line_from_json(const nlohmann::json& j) {
  LogLine l;
  l.case_id = j.value("case", std::string{});
  l.op_id = j.value("op", EdgeId{-1});
  l.kind = j.value("kind", std::string{});
  l.event = j.at("event").get<std::string>();
  l.temperature = j.value("T", 0.0);
  l.ratio = j.value("r", 1.0);
  l.t_sim = j.value("t_sim", 0.0);
  l.detail = j.value("detail", std::string{});
  return l;
}

namespace detail {

inline std::vector<const Tensor*> gather(const std::map<VertexId, Tensor>& values, const Edge& e) {
  std::vector<const Tensor*> src;
  for (auto v : e.srcs) src.push_back(&values.at(v));
  return src;
}

/// Evaluates one operator. Parameters come from the edge's weight seed.
inline Tensor apply_edge(const Edge& e, const std::vector<const Tensor*>& src, const TensorSpec& dst,
                         const kernels::SkipFn& skip) {
  using namespace kernels;
  WeightStream ws(e.weight_seed);
  const Tensor& x = *src.at(0);
  return std::visit(
      [&](const auto& k) -> Tensor {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, GemmConv>) {
          const auto c_in = x.spec.shape[2];
          switch (k.variant) {
            case ConvVariant::standard: {
              const double b = fan_in_bound(std::int64_t{k.kernel} * k.kernel * c_in);
              const auto w = ws.uniform(static_cast<std::size_t>(k.kernel * k.kernel * c_in * k.out_channels), b);
              const auto bias = ws.uniform(static_cast<std::size_t>(k.out_channels), b);
              return conv2d(x, w, bias, k.kernel, k.out_channels, k.precision);
            }
            case ConvVariant::depthwise: {
              const double b = fan_in_bound(std::int64_t{k.kernel} * k.kernel);
              const auto w = ws.uniform(static_cast<std::size_t>(k.kernel * k.kernel * c_in), b);
              const auto bias = ws.uniform(static_cast<std::size_t>(c_in), b);
              return depthwise_conv2d(x, w, bias, k.kernel, k.precision);
            }
            case ConvVariant::separable: {
              const double bd = fan_in_bound(std::int64_t{k.kernel} * k.kernel);
              const auto wd = ws.uniform(static_cast<std::size_t>(k.kernel * k.kernel * c_in), bd);
              const auto bias_d = ws.uniform(static_cast<std::size_t>(c_in), bd);
              const Tensor mid = depthwise_conv2d(x, wd, bias_d, k.kernel, k.precision);
              const double bp = fan_in_bound(c_in);
              const auto wp = ws.uniform(static_cast<std::size_t>(c_in * k.out_channels), bp);
              const auto bias_p = ws.uniform(static_cast<std::size_t>(k.out_channels), bp);
              return conv2d(mid, wp, bias_p, 1, k.out_channels, k.precision);
            }
          }
          throw std::logic_error("unknown conv variant");
        } else if constexpr (std::is_same_v<K, MatMul>) {
          if (src.size() == 2) return matmul(x, *src[1], k.precision);
          const auto kdim = x.spec.shape.back();
          const auto w = e.weight_seed == kIdentityWeightSeed
                             ? identity_matrix(kdim, k.out_features)
                             : ws.uniform(static_cast<std::size_t>(kdim * k.out_features), fan_in_bound(kdim));
          return matmul(x, w, k.out_features, k.precision);
        } else if constexpr (std::is_same_v<K, Rnn>) {
          return recurrent(x, Cell::rnn, k.hidden, 1, k.direction == RnnDirection::bi, ws, skip);
        } else if constexpr (std::is_same_v<K, Lstm>) {
          return recurrent(x, Cell::lstm, k.hidden, k.layers == LayerCount::multi ? kMultiLayerDepth : 1,
                           k.bidirectional, ws, skip);
        } else if constexpr (std::is_same_v<K, Gru>) {
          return recurrent(x, Cell::gru, k.hidden, k.layers == LayerCount::multi ? kMultiLayerDepth : 1,
                           k.bidirectional, ws, skip);
        } else if constexpr (std::is_same_v<K, Elementwise>) {
          if (k.op == ElementwiseOp::relu) return relu(x);
          if (src.size() == 2) return elementwise(x, *src[1], k.op);
          const auto f = static_cast<std::size_t>(x.spec.shape.back());
          const auto q = k.op == ElementwiseOp::mul ? ws.range(f, 0.5, 1.5) : ws.range(f, -0.5, 0.5);
          return elementwise(x, q, k.op);
        } else if constexpr (std::is_same_v<K, Dense>) {
          const auto f_in = x.spec.shape.back();
          if (e.weight_seed == kIdentityWeightSeed)
            return dense(x, identity_matrix(f_in, k.out_features),
                         std::vector<double>(static_cast<std::size_t>(k.out_features), 0.0), k.out_features);
          const double b = fan_in_bound(f_in);
          const auto w = ws.uniform(static_cast<std::size_t>(f_in * k.out_features), b);
          const auto bias = ws.uniform(static_cast<std::size_t>(k.out_features), 0.1);
          return dense(x, w, bias, k.out_features);
        } else if constexpr (std::is_same_v<K, Pool>) {
          return pool(x, k.mode);
        } else if constexpr (std::is_same_v<K, BatchNorm>) {
          const auto f = static_cast<std::size_t>(x.spec.shape.back());
          const auto gamma = ws.range(f, 0.5, 1.5);
          const auto beta = ws.range(f, -0.5, 0.5);
          const auto mean = ws.range(f, -0.5, 0.5);
          const auto var = ws.range(f, 0.5, 1.5);
          return batch_norm(x, gamma, beta, mean, var);
        } else if constexpr (std::is_same_v<K, NonePlaceholder>) {
          return x;
        } else {
          return adapt(x, dst);
        }
      },
      e.kind);
}

inline void check_inputs(const ModelGraph& g, const std::vector<Tensor>& inputs) {
  if (inputs.size() != g.inputs.size())
    throw std::invalid_argument("executor: expected " + std::to_string(g.inputs.size()) + " inputs, got " +
                                std::to_string(inputs.size()));
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto& want = g.spec(g.inputs[i].vertex);
    if (!(inputs[i].spec.shape == want.shape) || inputs[i].size() != static_cast<std::size_t>(want.size()))
      throw std::invalid_argument("executor: input " + std::to_string(i) + " has shape " +
                                  shape_string(inputs[i].spec.shape) + ", graph expects " + shape_string(want.shape));
  }
}

inline std::map<VertexId, Tensor> bind_inputs(const ModelGraph& g, const std::vector<Tensor>& inputs) {
  std::map<VertexId, Tensor> values;
  for (std::size_t i = 0; i < inputs.size(); ++i) values.emplace(g.inputs[i].vertex, inputs[i]);
  return values;
}

}  // namespace detail

/// Ideal execution. Sim time is charged at nominal frequency with default
/// operator costs. Internal failures surface as Crash("reference-internal").
inline ExecutionTrace run_reference(const ModelGraph& graph, const std::vector<Tensor>& inputs) {
  detail::check_inputs(graph, inputs);
  const FaultConfig costs;
  ExecutionTrace trace;
  try {
    auto values = detail::bind_inputs(graph, inputs);
    for (auto id : topo_order(graph)) {
      const Edge& e = graph.edges.at(id);
      trace.log.push_back(LogLine{{}, id, std::string(kind_name(e.kind)), std::string(events::kExec), 0.0, 1.0,
                                  trace.sim_wall_time, {}});
      trace.sim_wall_time += costs.op_cost(e.kind);
      values.insert_or_assign(e.dst, detail::apply_edge(e, detail::gather(values, e), graph.spec(e.dst), nullptr));
    }
    trace.outputs.push_back(values.at(graph.output));
  } catch (const std::exception& ex) {
    trace.status = TraceStatus::crash;
    trace.crash_reason = "reference-internal";
    trace.outputs.clear();
    trace.log.push_back(LogLine{{}, -1, {}, std::string(events::kInternalError), 0.0, 1.0, trace.sim_wall_time, ex.what()});
  }
  return trace;
}

/// Execution on the simulated temperature-varying device. The thermal clock
/// starts `t_start` seconds into the scenario. When the accumulated time
/// exceeds the budget the remaining operators still run (so the fault log
/// is complete) but the trace reports Timeout without outputs.
inline ExecutionTrace run_degraded(const ModelGraph& graph, const std::vector<Tensor>& inputs,
                                   const ThermalScenario& scenario, const GpuProfile& profile,
                                   const FaultConfig& faults, std::uint64_t rng_seed, double t_start = 0.0) {
  detail::check_inputs(graph, inputs);
  faults.validate();
  ExecutionTrace trace;
  bool timed_out = false;
  try {
    auto values = detail::bind_inputs(graph, inputs);
    double elapsed = 0.0;
    for (auto id : topo_order(graph)) {
      const Edge& e = graph.edges.at(id);
      const std::string kind(kind_name(e.kind));
      const double now = t_start + elapsed;
      const double temp = temperature_at(profile, scenario, now);
      const double r = frequency_ratio(profile, temp);
      auto line = [&](std::string_view event, std::string detail = {}) {
        trace.log.push_back(LogLine{{}, id, kind, std::string(event), temp, r, now, std::move(detail)});
      };
      line(events::kExec);

      elapsed += faults.op_cost(e.kind) / r;
      if (!timed_out && elapsed > faults.timeout_budget) {
        timed_out = true;
        line(events::kTimeout);
      }

      kernels::SkipFn skip;
      if (is_recurrent(e.kind) && r < faults.r_jitter) {
        const double p_skip = faults.jitter_gain * (faults.r_jitter - r);
        skip = [&, p_skip, id](int pass, std::int64_t step) {
          const bool s = counter_uniform({rng_seed, static_cast<std::uint64_t>(id), static_cast<std::uint64_t>(pass),
                                          static_cast<std::uint64_t>(step)}) < p_skip;
          if (s) line(events::kJitterSkip, "pass=" + std::to_string(pass) + " step=" + std::to_string(step));
          return s;
        };
      }

      Tensor result = detail::apply_edge(e, detail::gather(values, e), graph.spec(e.dst), skip);

      const auto prec = precision_of(e.kind);
      if (prec && (*prec == Precision::fp32 || *prec == Precision::mixed_int8_fp16) && r < faults.r_crit) {
        const int m_eff = static_cast<int>(std::floor(23.0 * r / faults.r_crit));
        if (m_eff <= 0) {
          for (auto& v : result.data) v = std::numeric_limits<double>::quiet_NaN();
          line(events::kNanForced);
        } else {
          for (auto& v : result.data) v = kernels::round_to_mantissa(v, m_eff);
          line(events::kMantissaTruncation, "bits=" + std::to_string(m_eff));
        }
      }
      values.insert_or_assign(e.dst, std::move(result));
    }
    trace.sim_wall_time = elapsed;
    if (timed_out) {
      trace.status = TraceStatus::timeout;
    } else {
      trace.outputs.push_back(values.at(graph.output));
    }
  } catch (const std::exception& ex) {
    trace.status = TraceStatus::crash;
    trace.crash_reason = "degraded-internal";
    trace.outputs.clear();
    trace.log.push_back(LogLine{{}, -1, {}, std::string(events::kInternalError), 0.0, 1.0, 0.0, ex.what()});
  }
  return trace;
}

}  // namespace thermalfuzz
