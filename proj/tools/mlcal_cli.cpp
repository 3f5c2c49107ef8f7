// Batch CLI around the calibration pipeline.
//
// Subcommands:
//   calibrate <config.json>            run the full pipeline, write a report
//   ground <config.json>               ground calibration only
//   synth <scene-config.json>          generate synthetic scans as PCD
//   evaluate <report.json> <truth.json> compare a report against truth poses
//
// Exit codes: 0 success, 2 partial calibration, 3 input/IO error,
// 4 config error.

#include "mlcal/mlcal.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

constexpr int kExitPartial = 2;
constexpr int kExitInput = 3;
constexpr int kExitConfig = 4;

bool g_verbose = false;

void vlog(const std::string& msg) {
  if (g_verbose) std::cerr << "[mlcal] " << msg << "\n";
}

int cmd_calibrate(const std::string& config_path) {
  const mlcal::RunConfig config = mlcal::load_run_config(config_path);
  vlog("loaded config with " + std::to_string(config.sensors.size()) +
       " sensors, target " + config.target_id);
  const mlcal::CalibrationReport report = mlcal::run_pipeline(config);
  for (const auto& diag : report.diagnostics) vlog(diag);
  std::cout << "report written to " << config.report_path << "\n";
  if (report.partial) {
    std::cerr << "partial calibration; uncalibrated:";
    for (const auto& id : report.uncalibrated) std::cerr << " " << id;
    std::cerr << "\n";
    return kExitPartial;
  }
  return 0;
}

int cmd_ground(const std::string& config_path) {
  const mlcal::RunConfig config = mlcal::load_run_config(config_path);
  std::vector<std::string> targets = config.ground_sensors;
  if (targets.empty())
    for (const auto& s : config.sensors) targets.push_back(s.id);

  mlcal::Json out;
  for (const auto& sensor : config.sensors) {
    if (std::find(targets.begin(), targets.end(), sensor.id) == targets.end())
      continue;
    const mlcal::PointCloud cloud = mlcal::read_pcd(sensor.cloud_path);
    const mlcal::GroundCalibration g =
        mlcal::ground_calibrate(cloud, config.ground);
    out[sensor.id] = {{"roll", g.roll},
                      {"pitch", g.pitch},
                      {"z_offset", g.z_offset}};
    std::printf("%s: roll %.6f rad, pitch %.6f rad, z %.4f m\n",
                sensor.id.c_str(), g.roll, g.pitch, g.z_offset);
  }
  std::ofstream f(config.report_path);
  f << out.dump(2) << "\n";
  std::cout << "ground report written to " << config.report_path << "\n";
  return 0;
}

int cmd_synth(const std::string& scene_path) {
  const mlcal::SceneConfig config = mlcal::load_scene_config(scene_path);
  std::filesystem::create_directories(config.output_dir);
  mlcal::Json truth;
  for (const auto& sensor : config.sensors) {
    const mlcal::SyntheticScan scan =
        mlcal::generate_scan(config.scene, sensor);
    const std::string path = config.output_dir + "/" + sensor.id + ".pcd";
    mlcal::write_pcd(scan.cloud, path);
    truth[sensor.id] = {{"matrix", mlcal::transform_to_json(sensor.pose)}};
    vlog(sensor.id + ": " + std::to_string(scan.cloud.size()) + " points");
  }
  const std::string truth_path = config.output_dir + "/ground_truth.json";
  std::ofstream f(truth_path);
  f << truth.dump(2) << "\n";
  std::cout << "scans and " << truth_path << " written to "
            << config.output_dir << "\n";
  return 0;
}

int cmd_evaluate(const std::string& report_path,
                 const std::string& truth_path) {
  std::ifstream rf(report_path), tf(truth_path);
  if (!rf) throw mlcal::IoError("cannot open " + report_path);
  if (!tf) throw mlcal::IoError("cannot open " + truth_path);
  const mlcal::Json report = mlcal::Json::parse(rf);
  const mlcal::Json truth = mlcal::Json::parse(tf);

  // Truth poses are sensor->scene; convert to sensor->target like the
  // report's entries.
  const std::string target_id = report.at("target_id").get<std::string>();
  if (!truth.contains(target_id))
    throw mlcal::ConfigError("truth file lacks target sensor " + target_id);
  const mlcal::RigidTransform target_pose =
      mlcal::transform_from_json(truth.at(target_id).at("matrix"));

  std::vector<mlcal::ErrorReport::Entry> table;
  for (const auto& [id, entry] : report.at("calibrations").items()) {
    if (id == target_id || !truth.contains(id)) continue;
    const mlcal::RigidTransform estimate =
        mlcal::transform_from_json(entry.at("matrix"));
    const mlcal::RigidTransform truth_rel =
        target_pose.inverse() * mlcal::transform_from_json(truth.at(id).at("matrix"));
    table.push_back({id, "", mlcal::pose_error(estimate, truth_rel)});
  }
  if (table.empty()) {
    std::cerr << "no comparable entries between report and truth\n";
    return kExitInput;
  }
  const mlcal::ErrorReport errors = mlcal::aggregate_rmse(table);

  std::printf("%-10s %12s %12s %12s %12s\n", "sensor", "dx [m]", "dy [m]",
              "dz [m]", "angle [deg]");
  for (const auto& e : errors.table)
    std::printf("%-10s %12.6f %12.6f %12.6f %12.6f\n", e.sensor_id.c_str(),
                e.error.translation_error.x(), e.error.translation_error.y(),
                e.error.translation_error.z(),
                e.error.total_angle * 180.0 / M_PI);
  std::printf("%-10s %12.6f %12.6f %12.6f %12.6f\n", "RMSE",
              errors.translation_rmse.x(), errors.translation_rmse.y(),
              errors.translation_rmse.z(),
              errors.total_angle_rmse * 180.0 / M_PI);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Targetless multi-LiDAR extrinsic calibration"};
  app.require_subcommand(1);
  app.add_flag("--verbose", g_verbose, "diagnostic logging to stderr");

  std::string config_path, report_path, truth_path;

  auto* calibrate = app.add_subcommand("calibrate", "run the full pipeline");
  calibrate->add_option("config", config_path, "run config JSON")->required();

  auto* ground = app.add_subcommand("ground", "ground calibration only");
  ground->add_option("config", config_path, "run config JSON")->required();

  auto* synth = app.add_subcommand("synth", "generate synthetic scans");
  synth->add_option("scene", config_path, "scene config JSON")->required();

  auto* evaluate = app.add_subcommand("evaluate", "compare report to truth");
  evaluate->add_option("report", report_path, "calibration report JSON")
      ->required();
  evaluate->add_option("truth", truth_path, "ground truth poses JSON")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (calibrate->parsed()) return cmd_calibrate(config_path);
    if (ground->parsed()) return cmd_ground(config_path);
    if (synth->parsed()) return cmd_synth(config_path);
    if (evaluate->parsed()) return cmd_evaluate(report_path, truth_path);
  } catch (const mlcal::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const mlcal::PartialCalibrationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitPartial;
  } catch (const mlcal::CalibrationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return 0;
}
