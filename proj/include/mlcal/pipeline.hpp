#pragma once

#include "mlcal/coarse.hpp"
#include "mlcal/config.hpp"
#include "mlcal/evaluate.hpp"
#include "mlcal/gicp.hpp"
#include "mlcal/ground.hpp"
#include "mlcal/pcd_io.hpp"
#include "mlcal/types.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace mlcal {

inline constexpr const char* kToolVersion = "0.1.0";

struct CalibrationReport {
  struct Entry {
    RigidTransform transform;
    double fitness = 0.0;
    int order = 0;
  };
  std::string target_id;
  std::map<std::string, Entry> calibrations;
  std::map<std::string, GroundCalibration> ground;
  std::vector<std::string> uncalibrated;  // non-empty on partial calibration
  std::vector<std::string> diagnostics;
  std::map<std::string, double> timings_seconds;
  Json config_echo;
  bool partial = false;
};

inline Json report_to_json(const CalibrationReport& report,
                           bool with_timestamp = true) {
  Json j;
  j["tool_version"] = kToolVersion;
  if (with_timestamp) {
    const std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    j["timestamp"] = buf;
  }
  j["target_id"] = report.target_id;
  j["calibrations"] = Json::object();
  for (const auto& [id, entry] : report.calibrations) {
    Json e;
    e["matrix"] = transform_to_json(entry.transform);
    const Vec3& t = entry.transform.translation;
    const Vec3 rpy = entry.transform.rpy();
    e["translation"] = {t.x(), t.y(), t.z()};
    e["rpy"] = {rpy.x(), rpy.y(), rpy.z()};
    e["fitness"] = entry.fitness;
    e["order"] = entry.order;
    j["calibrations"][id] = e;
  }
  if (!report.ground.empty()) {
    j["ground"] = Json::object();
    for (const auto& [id, g] : report.ground)
      j["ground"][id] = {{"roll", g.roll},
                         {"pitch", g.pitch},
                         {"z_offset", g.z_offset}};
  }
  j["partial"] = report.partial;
  j["uncalibrated"] = report.uncalibrated;
  j["diagnostics"] = report.diagnostics;
  j["timings_seconds"] = report.timings_seconds;
  j["config"] = report.config_echo;
  return j;
}

inline void write_report(const CalibrationReport& report,
                         const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report " + path);
  out << report_to_json(report).dump(2) << "\n";
}

/// Full batch run: read clouds, coarse-align all ordered pairs, fine
/// registration with match-and-merge, optional ground calibration. Partial
/// calibration is reported, not thrown; IO/parse/config errors propagate.
inline CalibrationReport run_pipeline(const RunConfig& config) {
  config.validate();
  using Clock = std::chrono::steady_clock;
  auto elapsed = [](Clock::time_point from) {
    return std::chrono::duration<double>(Clock::now() - from).count();
  };

  CalibrationReport report;
  report.target_id = config.target_id;
  report.config_echo = run_config_to_json(config);
  const auto t_total = Clock::now();

  auto t_stage = Clock::now();
  std::map<std::string, PointCloud> clouds;
  for (const auto& sensor : config.sensors) {
    PcdDiagnostics diag;
    PointCloud cloud = read_pcd(sensor.cloud_path, &diag);
    cloud.frame_id = sensor.id;
    if (cloud.empty())
      throw IoError("cloud for sensor " + sensor.id + " is empty");
    if (diag.dropped_nan > 0)
      report.diagnostics.push_back(sensor.id + ": dropped " +
                                   std::to_string(diag.dropped_nan) +
                                   " NaN points");
    clouds.emplace(sensor.id, std::move(cloud));
  }
  report.timings_seconds["read"] = elapsed(t_stage);

  t_stage = Clock::now();
  std::map<std::pair<std::string, std::string>, RigidTransform> seeds;
  for (const auto& [sid, scloud] : clouds) {
    for (const auto& [tid, tcloud] : clouds) {
      if (sid == tid) continue;
      const CoarseResult coarse = coarse_align(scloud, tcloud, config.coarse);
      if (coarse.success) {
        seeds[{sid, tid}] = coarse.transform;
      } else {
        report.diagnostics.push_back("coarse " + sid + "->" + tid +
                                     " fell back to identity: " +
                                     coarse.failure_reason);
      }
    }
  }
  report.timings_seconds["coarse"] = elapsed(t_stage);

  t_stage = Clock::now();
  try {
    const CalibrationSet set =
        calibrate_all(clouds, config.target_id, seeds, config.gicp);
    for (const auto& [id, entry] : set.entries)
      report.calibrations[id] = {entry.transform, entry.fitness, entry.order};
  } catch (const PartialCalibrationError& e) {
    report.partial = true;
    report.uncalibrated = e.uncalibrated;
    report.diagnostics.push_back(e.what());
    report.calibrations[config.target_id] = {RigidTransform::identity(), 1.0,
                                             0};
  }
  report.timings_seconds["fine"] = elapsed(t_stage);

  if (config.ground_enabled) {
    t_stage = Clock::now();
    std::vector<std::string> targets = config.ground_sensors;
    if (targets.empty())
      for (const auto& s : config.sensors) targets.push_back(s.id);
    for (const auto& id : targets) {
      try {
        report.ground[id] = ground_calibrate(clouds.at(id), config.ground);
      } catch (const NoPlaneFoundError&) {
        report.diagnostics.push_back("ground: no plane found for " + id);
      }
    }
    report.timings_seconds["ground"] = elapsed(t_stage);
  }

  if (!config.merged_cloud_path.empty()) {
    PointCloud fused;
    fused.frame_id = config.target_id;
    for (const auto& [id, entry] : report.calibrations)
      fused = merge(fused, apply_transform(clouds.at(id), entry.transform));
    write_pcd(fused, config.merged_cloud_path);
  }

  report.timings_seconds["total"] = elapsed(t_total);
  write_report(report, config.report_path);
  return report;
}

}  // namespace mlcal
