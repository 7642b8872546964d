// Scenario runner: load a JSON scenario, run the flight or crawl loop (or a
// vectoring-range analysis / parameter sweep) and write trajectory CSV and
// summary JSON artifacts.
//
// Exit codes: 0 success, 1 runtime violation or solver failure, 2 config error.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vecquad/config.hpp"
#include "vecquad/sim.hpp"

namespace {

using namespace vecquad;

constexpr int kExitOk = 0;
constexpr int kExitViolation = 1;
constexpr int kExitConfig = 2;

struct CommonOptions {
  std::string config_path;
  std::string out_dir;
  long long seed = -1;
};

ScenarioConfig load(const CommonOptions& opts) {
  ScenarioConfig cfg =
      opts.config_path.empty() ? ScenarioConfig::defaults() : load_scenario(opts.config_path);
  if (!opts.out_dir.empty()) cfg.output_dir = opts.out_dir;
  if (opts.seed >= 0) cfg.sim.seed = static_cast<unsigned long long>(opts.seed);
  cfg.robot.validate();
  return cfg;
}

void write_artifacts(const ScenarioConfig& cfg, const Trajectory& traj) {
  std::filesystem::create_directories(cfg.output_dir);
  {
    std::ofstream csv(cfg.output_dir + "/trajectory.csv");
    traj.write_csv(csv);
  }
  {
    std::ofstream js(cfg.output_dir + "/summary.json");
    js << Json(traj.summary).dump(2) << "\n";
  }
}

int run_fly(const CommonOptions& opts, bool no_interference) {
  const ScenarioConfig cfg = load(opts);
  FlightScenario scenario{cfg.sim, cfg.flight, cfg.gains, cfg.weights, cfg.interference,
                          !no_interference};
  scenario.sim.mode = SimMode::flight;
  const Trajectory traj = run_flight_scenario(cfg.robot, scenario);
  write_artifacts(cfg, traj);
  std::cout << "flight: " << traj.summary.ticks << " ticks, rmse_position "
            << traj.summary.rmse_position << " m, violations " << traj.summary.violations
            << "\n";
  return traj.summary.violations == 0 ? kExitOk : kExitViolation;
}

int run_crawl(const CommonOptions& opts, int cycles) {
  ScenarioConfig cfg = load(opts);
  if (cycles > 0) cfg.gait.cycles = cycles;
  CrawlScenario scenario{cfg.sim, cfg.gait, cfg.weights, cfg.contact_bounds, cfg.stance_bounds};
  scenario.sim.mode = SimMode::crawl;
  if (scenario.sim.duration < 30.0 * cfg.gait.cycles) {
    scenario.sim.duration = 30.0 * cfg.gait.cycles;  // give the planner room to finish
  }
  const Trajectory traj = run_crawl_scenario(cfg.robot, scenario);
  write_artifacts(cfg, traj);
  std::cout << "crawl: " << traj.summary.ticks << " ticks, displacement "
            << traj.summary.displacement.transpose() << " m, violations "
            << traj.summary.violations << "\n";
  return traj.summary.violations == 0 ? kExitOk : kExitViolation;
}

int run_ranges(const CommonOptions& opts) {
  const ScenarioConfig cfg = load(opts);
  const KinematicsResult kin = forward_kinematics(cfg.robot, cfg.analysis_pose);
  const auto ranges = valid_ranges(cfg.robot, kin, Vec3(0, 0, 1), cfg.interference);
  Json j = Json::array();
  for (const auto& r : ranges) j.push_back(r);
  const std::string text = j.dump(2);
  std::cout << text << "\n";
  std::filesystem::create_directories(cfg.output_dir);
  std::ofstream out(cfg.output_dir + "/ranges.json");
  out << text << "\n";
  return kExitOk;
}

int run_sweep(const CommonOptions& opts, const std::string& param,
              const std::vector<double>& values) {
  if (values.empty()) throw ConfigError("sweep: no values given");
  Json base = opts.config_path.empty() ? Json(ScenarioConfig::defaults())
                                       : parse_json_file(opts.config_path);
  Json results = Json::array();
  int worst = kExitOk;
  for (double v : values) {
    Json j = base;
    // param is a dot path, e.g. interference.clearance_radius
    Json* node = &j;
    std::stringstream ss(param);
    std::string key, leaf;
    std::vector<std::string> keys;
    while (std::getline(ss, key, '.')) keys.push_back(key);
    if (keys.empty()) throw ConfigError("sweep: empty parameter path");
    leaf = keys.back();
    keys.pop_back();
    for (const auto& k : keys) node = &((*node)[k]);
    (*node)[leaf] = v;

    ScenarioConfig cfg = j.get<ScenarioConfig>();
    if (!opts.out_dir.empty()) cfg.output_dir = opts.out_dir;
    cfg.output_dir += "/" + param + "=" + std::to_string(v);
    FlightScenario scenario{cfg.sim, cfg.flight, cfg.gains, cfg.weights, cfg.interference, true};
    const Trajectory traj = run_flight_scenario(cfg.robot, scenario);
    write_artifacts(cfg, traj);
    results.push_back({{"value", v},
                       {"rmse_position", traj.summary.rmse_position},
                       {"violations", traj.summary.violations}});
    if (traj.summary.violations > 0) worst = kExitViolation;
  }
  std::cout << results.dump(2) << "\n";
  return worst;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vectorable-thrust quadruped control toolkit"};
  app.require_subcommand(0, 1);

  bool dump_defaults = false;
  app.add_flag("--dump-defaults", dump_defaults, "print the default scenario config and exit");

  CommonOptions opts;
  bool no_interference = false;
  int cycles = 0;
  std::string sweep_param;
  std::vector<double> sweep_values;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config_path, "scenario JSON file");
    sub->add_option("--out", opts.out_dir, "output directory (overrides the config)");
    sub->add_option("--seed", opts.seed, "override the scenario seed");
  };

  CLI::App* fly = app.add_subcommand("fly", "run the flight scenario");
  add_common(fly);
  fly->add_flag("--no-interference", no_interference,
                "drop the vectoring-range constraints (baseline comparison)");

  CLI::App* crawl = app.add_subcommand("crawl", "run the crawl scenario");
  add_common(crawl);
  crawl->add_option("--cycles", cycles, "number of gait cycles");

  CLI::App* ranges = app.add_subcommand("ranges", "print per-rotor vectoring ranges");
  add_common(ranges);

  CLI::App* sweep = app.add_subcommand("sweep", "run the flight scenario over parameter values");
  add_common(sweep);
  sweep->add_option("--param", sweep_param, "dot path of the parameter, e.g. weights.thrust")
      ->required();
  sweep->add_option("--values", sweep_values, "values to sweep")->required()->delimiter(',');

  CLI11_PARSE(app, argc, argv);

  try {
    if (dump_defaults) {
      std::cout << Json(ScenarioConfig::defaults()).dump(2) << "\n";
      return kExitOk;
    }
    if (fly->parsed()) return run_fly(opts, no_interference);
    if (crawl->parsed()) return run_crawl(opts, cycles);
    if (ranges->parsed()) return run_ranges(opts);
    if (sweep->parsed()) return run_sweep(opts, sweep_param, sweep_values);
    std::cerr << app.help() << "\n";
    return kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ModelError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitViolation;
  }
}
