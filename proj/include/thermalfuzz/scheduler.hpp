#pragma once

// Heuristic scheduling: a seed pool ranked by bug-detection performance and
// per-rule cumulative contributions that drive rule selection.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "thermalfuzz/model_ir.hpp"
#include "thermalfuzz/mutation.hpp"
#include "thermalfuzz/oracle.hpp"
#include "thermalfuzz/rng.hpp"
#include "thermalfuzz/tensor.hpp"
#include "thermalfuzz/tensor_input.hpp"

namespace thermalfuzz {

/// Fraction of the pool drawn per seed selection.
inline constexpr double kSeedSubsetFraction = 0.1;

/// Added to every clamped contribution so each rule stays selectable.
inline constexpr double kRuleSmoothing = 0.01;

/// Performance assigned to starter seeds: the heavy-inconsistency threshold.
inline constexpr double kInitialSeedPerformance = kHeavyInconsistencyThreshold;

enum class SeedOrigin { initial, generated };

inline std::string_view to_string(SeedOrigin o) { return o == SeedOrigin::initial ? "initial" : "generated"; }

struct SeedRecord {
  std::string id;
  std::shared_ptr<const ModelGraph> model;
  double performance = kInitialSeedPerformance;
  SeedOrigin origin = SeedOrigin::initial;
  std::set<VerdictKind> triggered;
};

using SeedPool = std::vector<SeedRecord>;

struct RuleStats {
  std::array<double, kRuleCount> contribution{};

  [[nodiscard]] double operator[](MutationRule r) const { return contribution[rule_index(r)]; }
  friend bool operator==(const RuleStats&, const RuleStats&) = default;
};

/// max(1, ceil(0.1 n)).
inline std::size_t seed_subset_size(std::size_t pool_size) {
  if (pool_size == 0) throw std::invalid_argument("seed pool is empty");
  const auto k = static_cast<std::size_t>(std::ceil(kSeedSubsetFraction * static_cast<double>(pool_size)));
  return std::clamp<std::size_t>(k, 1, pool_size);
}

/// Uniform subset of pool indices, drawn without replacement, in draw order.
inline std::vector<std::size_t> draw_seed_subset(std::size_t pool_size, std::uint64_t rng_seed) {
  const std::size_t k = seed_subset_size(pool_size);
  std::vector<std::size_t> idx(pool_size);
  for (std::size_t i = 0; i < pool_size; ++i) idx[i] = i;
  Rng rng(rng_seed);
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(pool_size - i)]);
  idx.resize(k);
  return idx;
}

/// Index of the best-performing member of a random subset; `perf(i)` is only
/// called for indices in that subset. Ties go to the lowest index.
template <typename PerformanceOf>
std::size_t select_seed_index(std::size_t pool_size, PerformanceOf&& perf, std::uint64_t rng_seed) {
  auto subset = draw_seed_subset(pool_size, rng_seed);
  std::sort(subset.begin(), subset.end());
  std::size_t best = subset.front();
  double best_perf = perf(best);
  for (std::size_t j = 1; j < subset.size(); ++j) {
    const double p = perf(subset[j]);
    if (p > best_perf) {
      best = subset[j];
      best_perf = p;
    }
  }
  return best;
}

inline std::size_t select_seed_index(const SeedPool& pool, std::uint64_t rng_seed) {
  return select_seed_index(pool.size(), [&](std::size_t i) { return pool[i].performance; }, rng_seed);
}

inline const SeedRecord& select_seed(const SeedPool& pool, std::uint64_t rng_seed) {
  return pool[select_seed_index(pool, rng_seed)];
}

/// Crash and NaN score the mean input value; everything else scores the MAE.
inline double performance_of(VerdictKind verdict, std::span<const Tensor> inputs, double mae_value) {
  if (verdict == VerdictKind::crash || verdict == VerdictKind::nan) return mean_of(inputs);
  return mae_value;
}

inline RuleStats update_contribution(RuleStats stats, MutationRule rule, double perf_new, double perf_seed) {
  stats.contribution[rule_index(rule)] += perf_new - perf_seed;
  return stats;
}

/// Selection probabilities over the enabled rules: max(c, 0) + smoothing,
/// normalized. Disabled rules get probability 0.
inline std::array<double, kRuleCount> rule_probabilities(const RuleStats& stats,
                                                         std::span<const MutationRule> enabled = kAllRules) {
  if (enabled.empty()) throw std::invalid_argument("rule_probabilities: no rule enabled");
  std::array<double, kRuleCount> w{};
  for (auto r : enabled) w[rule_index(r)] = std::max(stats[r], 0.0) + kRuleSmoothing;
  double total = 0.0;
  for (double x : w) total += x;
  for (double& x : w) x /= total;
  return w;
}

inline MutationRule select_rule(const RuleStats& stats, std::uint64_t rng_seed,
                                std::span<const MutationRule> enabled = kAllRules) {
  const auto p = rule_probabilities(stats, enabled);
  Rng rng(rng_seed);
  const double u = rng.uniform();
  double acc = 0.0;
  int last = -1;
  for (int i = 0; i < kRuleCount; ++i) {
    if (p[static_cast<std::size_t>(i)] <= 0.0) continue;
    acc += p[static_cast<std::size_t>(i)];
    last = i;
    if (u < acc) return rule_from_id(i + 1);
  }
  return rule_from_id(last + 1);
}

/// Crash (non-duplicate), NaN and heavy-inconsistency models join the pool.
inline bool maybe_admit(SeedPool& pool, const ModelGraph& model, const Verdict& verdict, double performance,
                        std::string id = {}) {
  if (!is_fault(verdict.kind)) return false;
  if (verdict.kind == VerdictKind::crash && verdict.duplicate) return false;
  SeedRecord rec;
  rec.id = id.empty() ? "seed-" + std::to_string(pool.size()) : std::move(id);
  rec.model = std::make_shared<const ModelGraph>(model);
  rec.performance = performance;
  rec.origin = SeedOrigin::generated;
  rec.triggered.insert(verdict.kind);
  pool.push_back(std::move(rec));
  return true;
}

inline SeedPool make_pool(std::span<const ModelGraph> graphs) {
  SeedPool pool;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    SeedRecord rec;
    rec.id = graphs[i].name.empty() ? "seed-" + std::to_string(i) : graphs[i].name;
    rec.model = std::make_shared<const ModelGraph>(graphs[i]);
    pool.push_back(std::move(rec));
  }
  return pool;
}

// --- persistence ---------------------------------------------------------------

/// Writes `<dir>/index.json` plus one graph file per record.
inline void save_pool(const SeedPool& pool, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json index = nlohmann::ordered_json::array();
  for (const auto& rec : pool) {
    const std::string file = rec.id + ".json";
    save_graph(*rec.model, dir / file);
    nlohmann::ordered_json j;
    j["id"] = rec.id;
    j["file"] = file;
    j["performance"] = rec.performance;
    j["origin"] = to_string(rec.origin);
    auto& trig = j["triggered"] = nlohmann::ordered_json::array();
    for (auto k : rec.triggered) trig.push_back(to_string(k));
    index.push_back(std::move(j));
  }
  std::ofstream out(dir / "index.json");
  if (!out) throw std::runtime_error("cannot write seed pool index in " + dir.string());
  out << index.dump(2) << '\n';
}

inline SeedPool load_pool(const std::filesystem::path& dir) {
  std::ifstream in(dir / "index.json");
  if (!in) throw std::runtime_error("seed pool has no index.json: " + dir.string());
  const auto index = nlohmann::json::parse(in);
  SeedPool pool;
  for (const auto& j : index) {
    SeedRecord rec;
    rec.id = j.at("id").get<std::string>();
    rec.model = std::make_shared<const ModelGraph>(load_graph(dir / j.value("file", rec.id + ".json")));
    rec.performance = j.value("performance", kInitialSeedPerformance);
    if (!std::isfinite(rec.performance)) throw std::runtime_error("seed " + rec.id + " has non-finite performance");
    rec.origin = j.value("origin", std::string("initial")) == "generated" ? SeedOrigin::generated : SeedOrigin::initial;
    for (const auto& t : j.value("triggered", nlohmann::json::array()))
      rec.triggered.insert(verdict_from_string(t.get<std::string>()));
    pool.push_back(std::move(rec));
  }
  if (pool.empty()) throw std::runtime_error("seed pool is empty: " + dir.string());
  return pool;
}

}  // namespace thermalfuzz
