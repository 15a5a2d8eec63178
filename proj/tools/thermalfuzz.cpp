// Command-line front end: run a campaign, replay a logged case, re-render a
// report, or export the bundled starter seed pool.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "thermalfuzz/thermalfuzz.hpp"

namespace fs = std::filesystem;
namespace tf = thermalfuzz;

namespace {

constexpr const char* kOutEnv = "THERMALFUZZ_OUT";

fs::path env_out() {
  const char* v = std::getenv(kOutEnv);
  return v && *v ? fs::path(v) : fs::path{};
}

fs::path resolve_out(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (auto e = env_out(); !e.empty()) return e;
  throw std::invalid_argument(std::string("no output directory: pass --out or set ") + kOutEnv);
}

int cmd_run(const std::string& config_path) {
  auto cfg = tf::load_campaign_config(config_path);
  if (auto e = env_out(); !e.empty()) cfg.output_dir = e;
  const auto report = tf::run_campaign(cfg, &std::cerr);
  std::cout << report["totals"].dump() << '\n';
  std::cerr << "wrote " << (cfg.output_dir / tf::kReportFile).string() << '\n';
  return 0;
}

int cmd_replay(const std::string& id, const std::string& out_flag) {
  const auto res = tf::replay(id, resolve_out(out_flag));
  nlohmann::ordered_json j;
  j["case"] = res.case_id;
  j["verdict"] = tf::to_string(res.verdict.kind);
  j["mae"] = res.verdict.mae;
  j["duplicate"] = res.verdict.duplicate;
  j["reference_status"] = tf::to_string(res.reference.status);
  j["degraded_status"] = tf::to_string(res.degraded.status);
  j["fault_events"] = tf::fault_event_count(res.degraded);
  j["checksum_ok"] = res.checksum_ok;
  j["model_matches"] = res.model_matches;
  j["reproduced"] = res.reproduced;
  std::cout << j.dump(2) << '\n';
  if (!res.checksum_ok) std::cerr << "warning: metadata checksum mismatch for case " << id << '\n';
  return res.reproduced && res.checksum_ok ? 0 : 2;
}

int cmd_report(const std::string& out_flag) {
  const auto out = resolve_out(out_flag);
  std::cout << tf::regenerate_report(out).dump(2) << '\n';
  return 0;
}

int cmd_seeds(const std::string& dir) {
  const auto starters = tf::starter_models();
  tf::save_pool(tf::make_pool(starters), dir);
  std::cerr << "wrote " << starters.size() << " starter graphs to " << dir << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Thermal-aware differential fuzzing of compute-graph runtimes"};
  app.require_subcommand(1);

  std::string config_path, case_name, out_dir, seeds_dir;
  auto* run = app.add_subcommand("run", "Run a fuzzing campaign");
  run->add_option("--config", config_path, "Campaign config JSON")->required()->check(CLI::ExistingFile);

  auto* rep = app.add_subcommand("replay", "Re-execute one logged case and compare with the log");
  rep->add_option("--case", case_name, "Case id, e.g. s1-i42")->required();
  rep->add_option("--out", out_dir, std::string("Campaign output directory (default: $") + kOutEnv + ")");

  auto* report = app.add_subcommand("report", "Re-render report.json from events.jsonl");
  report->add_option("--out", out_dir, std::string("Campaign output directory (default: $") + kOutEnv + ")");

  auto* seeds = app.add_subcommand("seeds", "Write the bundled starter graphs as a seed pool directory");
  seeds->add_option("--out", seeds_dir, "Destination directory")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(config_path);
    if (*rep) return cmd_replay(case_name, out_dir);
    if (*report) return cmd_report(out_dir);
    if (*seeds) return cmd_seeds(seeds_dir);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 1;
  }
  return 0;
}
