#pragma once

// Campaign orchestration: per scenario, iterate select seed -> select rule ->
// mutate -> generate inputs -> run both executors -> verdict -> update the
// heuristics. Every case is logged to events.jsonl; report.json is rendered
// from that log alone so `report` can regenerate it.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "thermalfuzz/dvfs.hpp"
#include "thermalfuzz/executors.hpp"
#include "thermalfuzz/model_ir.hpp"
#include "thermalfuzz/mutation.hpp"
#include "thermalfuzz/oracle.hpp"
#include "thermalfuzz/rng.hpp"
#include "thermalfuzz/scheduler.hpp"
#include "thermalfuzz/starter_models.hpp"
#include "thermalfuzz/tensor_input.hpp"
#include "thermalfuzz/thermal.hpp"

namespace thermalfuzz {

namespace fs = std::filesystem;

inline constexpr std::string_view kEventsFile = "events.jsonl";
inline constexpr std::string_view kReportFile = "report.json";
inline constexpr std::string_view kCrashArchiveFile = "crashes.jsonl";

struct CampaignConfig {
  fs::path profile_path;       ///< empty: built-in default profile
  fs::path fault_config_path;  ///< empty: default fault model
  std::vector<int> scenarios{1, 2, 3, 4, 5, 6};
  std::int64_t iterations_per_scenario = 500;
  std::uint64_t master_seed = 1;
  fs::path output_dir = "out";
  fs::path seed_pool_dir;  ///< empty: bundled starter graphs
  std::vector<int> enabled_rules{1, 2, 3, 4, 5, 6, 7, 8};
  double tick_seconds = 1.0;  ///< thermal clock advance per iteration

  void validate() const {
    if (iterations_per_scenario < 1) throw std::invalid_argument("config: iterations_per_scenario must be >= 1");
    if (scenarios.empty()) throw std::invalid_argument("config: scenarios must be nonempty");
    for (int s : scenarios)
      if (s < 1 || s > 6) throw std::invalid_argument("config: scenario ids must be in 1..6");
    if (enabled_rules.empty()) throw std::invalid_argument("config: enabled_rules must be nonempty");
    for (int r : enabled_rules) (void)rule_from_id(r);
    if (!(tick_seconds >= 0.0)) throw std::invalid_argument("config: tick_seconds must be >= 0");
  }

  [[nodiscard]] std::vector<MutationRule> rules() const {
    std::set<int> ids(enabled_rules.begin(), enabled_rules.end());
    std::vector<MutationRule> out;
    for (int id : ids) out.push_back(rule_from_id(id));
    return out;
  }
};

/// Relative paths inside the file are resolved against `base_dir`.
inline CampaignConfig campaign_config_from_json(const nlohmann::json& j, const fs::path& base_dir = {}) {
  CampaignConfig c;
  auto path_of = [&](const char* key) -> fs::path {
    if (!j.contains(key) || j.at(key).is_null()) return {};
    fs::path p = j.at(key).get<std::string>();
    if (p.empty() || p.is_absolute() || base_dir.empty()) return p;
    return base_dir / p;
  };
  c.profile_path = path_of("profile");
  c.fault_config_path = path_of("fault_config");
  c.seed_pool_dir = path_of("seed_pool");
  if (j.contains("output_dir")) c.output_dir = path_of("output_dir");
  c.scenarios = j.value("scenarios", c.scenarios);
  c.iterations_per_scenario = j.value("iterations_per_scenario", c.iterations_per_scenario);
  c.master_seed = j.value("master_seed", c.master_seed);
  c.enabled_rules = j.value("enabled_rules", c.enabled_rules);
  c.tick_seconds = j.value("tick_seconds", c.tick_seconds);
  c.validate();
  return c;
}

inline CampaignConfig load_campaign_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open campaign config: " + path.string());
  return campaign_config_from_json(nlohmann::json::parse(in), path.parent_path());
}

// --- one case -------------------------------------------------------------------

inline std::string case_id(int scenario, std::int64_t iteration) {
  return "s" + std::to_string(scenario) + "-i" + std::to_string(iteration);
}

inline std::uint64_t iteration_seed(std::uint64_t master, int scenario, std::int64_t iteration) {
  return derive_seed({master, static_cast<std::uint64_t>(scenario), static_cast<std::uint64_t>(iteration)});
}

/// Sub-streams of one iteration.
enum class Stream : std::uint64_t { seed_choice = 1, rule_choice, mutation, inputs, degraded };

inline std::uint64_t stream_seed(std::uint64_t iter_seed, Stream s) {
  return derive_seed({iter_seed, static_cast<std::uint64_t>(s)});
}

/// Integrity tag over the metadata a replay depends on.
inline std::string case_checksum(const nlohmann::json& ev) {
  std::ostringstream s;
  s << ev.at("scenario").get<int>() << '|' << ev.at("iteration").get<std::int64_t>() << '|'
    << ev.at("master_seed").get<std::uint64_t>() << '|' << ev.at("seed_id").get<std::string>() << '|'
    << ev.at("rule").get<int>();
  std::ostringstream hex;
  hex << std::hex << fnv1a64(s.str());
  return hex.str();
}

struct CaseRun {
  MutationResult mutation;
  std::vector<Tensor> inputs;
  ExecutionTrace reference;
  ExecutionTrace degraded;
};

/// Mutation, input generation and both executions. Throws NoEligibleSite.
inline CaseRun execute_case(const ModelGraph& seed, MutationRule rule, std::uint64_t iter_seed, double t_start,
                            const ThermalScenario& scenario, const GpuProfile& profile, const FaultConfig& faults) {
  CaseRun run{mutate(seed, rule, stream_seed(iter_seed, Stream::mutation)), {}, {}, {}};
  run.inputs = gen_inputs(run.mutation.graph, stream_seed(iter_seed, Stream::inputs));
  run.reference = run_reference(run.mutation.graph, run.inputs);
  run.degraded = run_degraded(run.mutation.graph, run.inputs, scenario, profile, faults,
                              stream_seed(iter_seed, Stream::degraded), t_start);
  return run;
}

// --- report ---------------------------------------------------------------------

inline std::vector<nlohmann::json> read_events(const fs::path& out_dir) {
  const fs::path path = out_dir / kEventsFile;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open event log: " + path.string());
  std::vector<nlohmann::json> events;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) events.push_back(nlohmann::json::parse(line));
  return events;
}

/// Renders the campaign report from the event log.
inline nlohmann::ordered_json build_report(const std::vector<nlohmann::json>& events) {
  const nlohmann::json* header = nullptr;
  for (const auto& ev : events)
    if (ev.value("type", "") == "campaign") header = &ev;
  if (!header) throw std::runtime_error("event log has no campaign header");
  const GpuProfile profile = profile_from_json(header->at("profile"));

  struct ScenarioTally {
    std::int64_t cases = 0, crashes = 0, raw_crashes = 0, raw_nans = 0, raw_hi = 0, passes = 0, invalid = 0,
                 skipped = 0;
    std::set<std::string> nan_models, hi_models;
    std::array<std::int64_t, kRuleCount> selections{};
    std::vector<double> contributions = std::vector<double>(kRuleCount, 0.0);
  };
  std::map<int, ScenarioTally> per;
  std::vector<int> order;
  std::int64_t global_crashes = 0;
  std::set<std::string> global_nan, global_hi;
  std::set<OpCategory> hit;

  for (const auto& ev : events) {
    const std::string type = ev.value("type", "");
    if (type == "scenario_end") {
      per[ev.at("scenario").get<int>()].contributions = ev.at("contributions").get<std::vector<double>>();
      continue;
    }
    if (type != "case") continue;
    const int s = ev.at("scenario").get<int>();
    if (!per.count(s)) order.push_back(s);
    auto& t = per[s];
    ++t.cases;
    ++t.selections[static_cast<std::size_t>(ev.at("rule").get<int>() - 1)];
    const std::string verdict = ev.at("verdict").get<std::string>();
    if (verdict == "skipped") {
      ++t.skipped;
      continue;
    }
    for (const auto& c : ev.at("categories")) hit.insert(category_from_string(c.get<std::string>()));
    const std::string model = ev.at("model_hash").get<std::string>();
    switch (verdict_from_string(verdict)) {
      case VerdictKind::crash:
        ++t.raw_crashes;
        if (!ev.at("duplicate").get<bool>()) ++t.crashes;
        if (!ev.at("global_duplicate").get<bool>()) ++global_crashes;
        break;
      case VerdictKind::nan:
        ++t.raw_nans;
        t.nan_models.insert(model);
        global_nan.insert(model);
        break;
      case VerdictKind::heavy_inconsistency:
        ++t.raw_hi;
        t.hi_models.insert(model);
        global_hi.insert(model);
        break;
      case VerdictKind::pass: ++t.passes; break;
      case VerdictKind::invalid: ++t.invalid; break;
    }
  }

  nlohmann::ordered_json r;
  r["master_seed"] = header->at("config").at("master_seed");
  r["iterations_per_scenario"] = header->at("config").at("iterations_per_scenario");
  r["enabled_rules"] = header->at("config").at("enabled_rules");
  auto& scen = r["scenarios"] = nlohmann::ordered_json::array();
  std::vector<double> summed(kRuleCount, 0.0);
  for (int s : order) {
    const auto& t = per.at(s);
    nlohmann::ordered_json j;
    j["id"] = s;
    j["name"] = standard_scenario(profile, s).name;
    j["cases"] = t.cases;
    j["crashes"] = t.crashes;
    j["nans"] = t.nan_models.size();
    j["heavy_inconsistencies"] = t.hi_models.size();
    j["fault_verdicts"] = t.raw_crashes + t.raw_nans + t.raw_hi;
    j["verdicts"] = {{"crash", t.raw_crashes}, {"nan", t.raw_nans},   {"heavy_inconsistency", t.raw_hi},
                     {"pass", t.passes},       {"invalid", t.invalid}, {"skipped", t.skipped}};
    j["rule_selections"] = t.selections;
    j["contributions"] = t.contributions;
    for (int i = 0; i < kRuleCount; ++i) summed[static_cast<std::size_t>(i)] += t.contributions[static_cast<std::size_t>(i)];
    scen.push_back(std::move(j));
  }
  r["totals"] = {{"crashes", global_crashes},
                 {"nans", global_nan.size()},
                 {"heavy_inconsistencies", global_hi.size()},
                 {"unique_bugs", static_cast<std::size_t>(global_crashes) + global_nan.size() + global_hi.size()}};

  const auto universe = default_universe();
  const Coverage cov = coverage_of(hit, universe);
  nlohmann::ordered_json covj;
  covj["operator_coverage"] = cov.operator_coverage;
  covj["temp_sensitive_coverage"] = cov.temp_sensitive_coverage;
  auto& covered = covj["covered"] = nlohmann::ordered_json::array();
  for (auto c : universe)
    if (hit.count(c)) covered.push_back(to_string(c));
  r["coverage"] = std::move(covj);

  auto& contrib = r["contributions"] = nlohmann::ordered_json::array();
  for (auto rule : kAllRules)
    contrib.push_back({{"rule", static_cast<int>(rule)},
                       {"name", rule_name(rule)},
                       {"contribution", summed[static_cast<std::size_t>(rule_index(rule))]}});
  return r;
}

inline void write_report(const nlohmann::ordered_json& report, const fs::path& out_dir) {
  std::ofstream out(out_dir / kReportFile);
  if (!out) throw std::runtime_error("cannot write report in " + out_dir.string());
  out << report.dump(2) << '\n';
}

/// Re-renders report.json from events.jsonl.
inline nlohmann::ordered_json regenerate_report(const fs::path& out_dir) {
  auto report = build_report(read_events(out_dir));
  write_report(report, out_dir);
  return report;
}

// --- campaign loop ----------------------------------------------------------------

inline SeedPool initial_pool(const CampaignConfig& cfg) {
  if (cfg.seed_pool_dir.empty()) {
    const auto starters = starter_models();
    return make_pool(starters);
  }
  auto pool = load_pool(cfg.seed_pool_dir);
  for (auto& rec : pool) {
    if (const auto errs = validate(*rec.model); !errs.empty())
      throw std::runtime_error("seed " + rec.id + " is not a valid graph: " + errs.front());
  }
  return pool;
}

inline fs::path scenario_pool_dir(const fs::path& out_dir, int scenario) {
  return out_dir / "pool" / ("scenario-" + std::to_string(scenario));
}

inline std::string hash_string(std::uint64_t h) {
  std::ostringstream s;
  s << std::hex << h;
  return s.str();
}

/// Runs every configured scenario and returns the rendered report.
/// `progress`, when given, receives one line per finished scenario.
inline nlohmann::ordered_json run_campaign(const CampaignConfig& cfg, std::ostream* progress = nullptr) {
  cfg.validate();
  const GpuProfile profile = cfg.profile_path.empty() ? GpuProfile{} : load_profile(cfg.profile_path);
  profile.validate();
  const FaultConfig faults = cfg.fault_config_path.empty() ? FaultConfig{} : load_fault_config(cfg.fault_config_path);
  faults.validate();
  const SeedPool starters = initial_pool(cfg);
  const auto rules = cfg.rules();

  fs::create_directories(cfg.output_dir);
  std::ofstream events(cfg.output_dir / kEventsFile);
  if (!events) throw std::runtime_error("cannot write event log in " + cfg.output_dir.string());

  nlohmann::ordered_json header;
  header["type"] = "campaign";
  header["config"] = {{"scenarios", cfg.scenarios},
                      {"iterations_per_scenario", cfg.iterations_per_scenario},
                      {"master_seed", cfg.master_seed},
                      {"enabled_rules", cfg.enabled_rules},
                      {"tick_seconds", cfg.tick_seconds}};
  header["profile"] = profile_to_json(profile);
  header["faults"] = fault_config_to_json(faults);
  events << header.dump() << '\n';

  CrashArchive global_archive;
  for (int s : cfg.scenarios) {
    const ThermalScenario scenario = standard_scenario(profile, s);
    SeedPool pool = starters;
    RuleStats stats;
    CrashArchive archive;

    for (std::int64_t i = 0; i < cfg.iterations_per_scenario; ++i) {
      const std::string id = case_id(s, i);
      const std::uint64_t iter_seed = iteration_seed(cfg.master_seed, s, i);
      const std::size_t seed_idx = select_seed_index(pool, stream_seed(iter_seed, Stream::seed_choice));
      const SeedRecord& seed = pool[seed_idx];
      const MutationRule rule = select_rule(stats, stream_seed(iter_seed, Stream::rule_choice), rules);

      nlohmann::ordered_json ev;
      ev["type"] = "case";
      ev["case"] = id;
      ev["scenario"] = s;
      ev["iteration"] = i;
      ev["master_seed"] = cfg.master_seed;
      ev["seed_id"] = seed.id;
      ev["rule"] = static_cast<int>(rule);
      ev["checksum"] = case_checksum(ev);

      std::optional<CaseRun> run;
      try {
        run = execute_case(*seed.model, rule, iter_seed, static_cast<double>(i) * cfg.tick_seconds, scenario,
                           profile, faults);
      } catch (const NoEligibleSite&) {
        ev["verdict"] = "skipped";
        events << ev.dump() << '\n';
        continue;
      }
      const ModelGraph& mutant = run->mutation.graph;
      ev["site"] = site_string(run->mutation.site);
      ev["mutation"] = run->mutation.detail;
      ev["model_hash"] = hash_string(content_hash(mutant));
      auto& cats = ev["categories"] = nlohmann::ordered_json::array();
      for (auto c : categories_in(mutant)) cats.push_back(to_string(c));

      stamp_case(run->degraded, id);
      const nlohmann::json meta = {{"case", id}, {"scenario", s}, {"iteration", i}};
      const Verdict v = detect(run->reference, run->degraded, archive, meta);
      ev["verdict"] = to_string(v.kind);
      ev["mae"] = v.mae;
      ev["duplicate"] = v.duplicate;
      ev["global_duplicate"] = v.kind == VerdictKind::crash && dedup_crash(v.normalized_log, global_archive, meta);
      if (v.kind == VerdictKind::crash) ev["tokens"] = v.normalized_log;
      ev["fault_events"] = fault_event_count(run->degraded);

      if (v.kind != VerdictKind::invalid) {
        const double perf = performance_of(v.kind, run->inputs, v.mae);
        ev["performance"] = perf;
        stats = update_contribution(stats, rule, perf, seed.performance);
        maybe_admit(pool, mutant, v, perf, id);
      }
      events << ev.dump() << '\n';
    }

    save_pool(pool, scenario_pool_dir(cfg.output_dir, s));
    nlohmann::ordered_json end;
    end["type"] = "scenario_end";
    end["scenario"] = s;
    end["pool_size"] = pool.size();
    end["contributions"] = stats.contribution;
    events << end.dump() << '\n';
    if (progress) *progress << "scenario " << s << " done: pool " << pool.size() << '\n';
  }
  events.close();
  global_archive.save(cfg.output_dir / kCrashArchiveFile);
  return regenerate_report(cfg.output_dir);
}

// --- replay -----------------------------------------------------------------------

struct ReplayResult {
  std::string case_id;
  ExecutionTrace reference;
  ExecutionTrace degraded;
  Verdict verdict;
  bool checksum_ok = true;
  bool model_matches = true;
  bool reproduced = false;  ///< verdict, mae bits, tokens and duplicate flag all match the log
};

inline ReplayResult replay(const std::string& id, const fs::path& out_dir) {
  const auto events = read_events(out_dir);
  const nlohmann::json* header = nullptr;
  const nlohmann::json* target = nullptr;
  std::size_t target_pos = 0;
  for (std::size_t k = 0; k < events.size(); ++k) {
    const auto& ev = events[k];
    if (ev.value("type", "") == "campaign") header = &ev;
    if (ev.value("type", "") == "case" && ev.value("case", "") == id) {
      target = &ev;
      target_pos = k;
    }
  }
  if (!header) throw std::runtime_error("event log has no campaign header");
  if (!target) throw std::invalid_argument("unknown case id: " + id);
  const auto& ev = *target;

  ReplayResult res;
  res.case_id = id;
  res.checksum_ok = case_checksum(ev) == ev.value("checksum", "");
  if (ev.at("verdict").get<std::string>() == "skipped") throw std::invalid_argument("case " + id + " was skipped");

  const GpuProfile profile = profile_from_json(header->at("profile"));
  const FaultConfig faults = fault_config_from_json(header->at("faults"));
  const double tick = header->at("config").value("tick_seconds", 1.0);
  const int s = ev.at("scenario").get<int>();
  const auto i = ev.at("iteration").get<std::int64_t>();
  const std::uint64_t iter_seed = iteration_seed(ev.at("master_seed").get<std::uint64_t>(), s, i);

  const SeedPool pool = load_pool(scenario_pool_dir(out_dir, s));
  const std::string seed_id = ev.at("seed_id").get<std::string>();
  const auto it = std::find_if(pool.begin(), pool.end(), [&](const SeedRecord& r) { return r.id == seed_id; });
  if (it == pool.end()) throw std::runtime_error("seed " + seed_id + " not found in the saved pool");

  auto run = execute_case(*it->model, rule_from_id(ev.at("rule").get<int>()), iter_seed,
                          static_cast<double>(i) * tick, standard_scenario(profile, s), profile, faults);
  stamp_case(run.degraded, id);
  res.model_matches = hash_string(content_hash(run.mutation.graph)) == ev.value("model_hash", "");

  // Earlier unique crashes of the same scenario form the dedup history.
  CrashArchive archive;
  for (std::size_t k = 0; k < target_pos; ++k) {
    const auto& e = events[k];
    if (e.value("type", "") == "case" && e.value("scenario", 0) == s && e.value("verdict", "") == "crash" &&
        !e.value("duplicate", true))
      archive.append(e.at("tokens").get<std::vector<std::string>>());
  }
  res.verdict = detect(run.reference, run.degraded, archive);
  res.reference = std::move(run.reference);
  res.degraded = std::move(run.degraded);

  bool same = to_string(res.verdict.kind) == ev.at("verdict").get<std::string>() &&
              std::bit_cast<std::uint64_t>(res.verdict.mae) == std::bit_cast<std::uint64_t>(ev.at("mae").get<double>()) &&
              res.verdict.duplicate == ev.at("duplicate").get<bool>();
  if (res.verdict.kind == VerdictKind::crash)
    same = same && ev.contains("tokens") && res.verdict.normalized_log == ev.at("tokens").get<std::vector<std::string>>();
  res.reproduced = same && res.model_matches;
  return res;
}

}  // namespace thermalfuzz
