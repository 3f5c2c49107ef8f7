#pragma once

#include "mlcal/coarse.hpp"
#include "mlcal/gicp.hpp"
#include "mlcal/ground.hpp"
#include "mlcal/synth.hpp"
#include "mlcal/types.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <string>
#include <vector>

namespace mlcal {

using Json = nlohmann::ordered_json;

struct SensorInput {
  std::string id;
  std::string cloud_path;
};

struct RunConfig {
  std::vector<SensorInput> sensors;
  std::string target_id;
  CoarseParams coarse;
  GicpParams gicp;
  bool ground_enabled = false;
  std::vector<std::string> ground_sensors;  // empty = all
  GroundParams ground;
  std::string report_path = "calibration_report.json";
  std::string merged_cloud_path;  // optional fused-cloud export
  std::uint64_t seed = 0;

  void validate() const {
    if (sensors.size() < 2) throw ConfigError("need at least 2 sensors");
    std::set<std::string> ids;
    for (const auto& s : sensors) {
      if (s.id.empty()) throw ConfigError("sensor id must be non-empty");
      if (s.cloud_path.empty())
        throw ConfigError("cloud_path must be non-empty for " + s.id);
      if (!ids.insert(s.id).second)
        throw ConfigError("duplicate sensor id " + s.id);
    }
    if (!ids.count(target_id))
      throw ConfigError("target_id '" + target_id + "' not among sensors");
    for (const auto& g : ground_sensors)
      if (!ids.count(g))
        throw ConfigError("ground sensor '" + g + "' not among sensors");
    if (report_path.empty()) throw ConfigError("report_path must be non-empty");
    gicp.validate();
  }
};

namespace detail {

template <typename T>
void read_if(const Json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).template get<T>();
}

}  // namespace detail

inline RunConfig parse_run_config(const Json& j) {
  RunConfig cfg;
  try {
    if (!j.contains("sensors") || !j.at("sensors").is_array())
      throw ConfigError("missing 'sensors' array");
    for (const auto& s : j.at("sensors")) {
      SensorInput in;
      in.id = s.at("id").get<std::string>();
      in.cloud_path = s.at("cloud_path").get<std::string>();
      cfg.sensors.push_back(in);
    }
    cfg.target_id = j.at("target_id").get<std::string>();
    if (j.contains("coarse")) {
      const auto& c = j.at("coarse");
      detail::read_if(c, "voxel_size", cfg.coarse.voxel_size);
      detail::read_if(c, "fpfh_radius_factor", cfg.coarse.fpfh_radius_factor);
      cfg.coarse.noise_bound = cfg.coarse.voxel_size;
      detail::read_if(c, "noise_bound", cfg.coarse.noise_bound);
      detail::read_if(c, "normal_k", cfg.coarse.normal_k);
    }
    if (j.contains("gicp")) {
      const auto& g = j.at("gicp");
      detail::read_if(g, "max_correspondence_distance",
                      cfg.gicp.max_correspondence_distance);
      detail::read_if(g, "max_iterations", cfg.gicp.max_iterations);
      detail::read_if(g, "transformation_epsilon",
                      cfg.gicp.transformation_epsilon);
      detail::read_if(g, "fitness_threshold", cfg.gicp.fitness_threshold);
      detail::read_if(g, "covariance_epsilon", cfg.gicp.covariance_epsilon);
      detail::read_if(g, "neighbor_count", cfg.gicp.neighbor_count);
      detail::read_if(g, "fine_voxel_size", cfg.gicp.fine_voxel_size);
    }
    if (j.contains("ground")) {
      const auto& g = j.at("ground");
      detail::read_if(g, "enabled", cfg.ground_enabled);
      detail::read_if(g, "sensors", cfg.ground_sensors);
      detail::read_if(g, "distance_threshold", cfg.ground.distance_threshold);
      detail::read_if(g, "max_iterations", cfg.ground.max_iterations);
    }
    if (j.contains("output")) {
      const auto& o = j.at("output");
      detail::read_if(o, "report_path", cfg.report_path);
      detail::read_if(o, "merged_cloud_path", cfg.merged_cloud_path);
    }
    detail::read_if(j, "seed", cfg.seed);
    cfg.ground.seed = cfg.seed;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  cfg.validate();
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
  return parse_run_config(j);
}

inline Json run_config_to_json(const RunConfig& cfg) {
  Json j;
  j["sensors"] = Json::array();
  for (const auto& s : cfg.sensors)
    j["sensors"].push_back({{"id", s.id}, {"cloud_path", s.cloud_path}});
  j["target_id"] = cfg.target_id;
  j["coarse"] = {{"voxel_size", cfg.coarse.voxel_size},
                 {"fpfh_radius_factor", cfg.coarse.fpfh_radius_factor},
                 {"noise_bound", cfg.coarse.noise_bound},
                 {"normal_k", cfg.coarse.normal_k}};
  j["gicp"] = {
      {"max_correspondence_distance", cfg.gicp.max_correspondence_distance},
      {"max_iterations", cfg.gicp.max_iterations},
      {"transformation_epsilon", cfg.gicp.transformation_epsilon},
      {"fitness_threshold", cfg.gicp.fitness_threshold},
      {"covariance_epsilon", cfg.gicp.covariance_epsilon},
      {"neighbor_count", cfg.gicp.neighbor_count},
      {"fine_voxel_size", cfg.gicp.fine_voxel_size}};
  j["ground"] = {{"enabled", cfg.ground_enabled},
                 {"sensors", cfg.ground_sensors},
                 {"distance_threshold", cfg.ground.distance_threshold},
                 {"max_iterations", cfg.ground.max_iterations}};
  j["output"] = {{"report_path", cfg.report_path},
                 {"merged_cloud_path", cfg.merged_cloud_path}};
  j["seed"] = cfg.seed;
  return j;
}

// --------------------------------------------------------------------------
// Scene configs (synthetic scan generation)
// --------------------------------------------------------------------------

struct SceneConfig {
  SceneSpec scene;
  std::vector<SensorSpec> sensors;
  std::string output_dir = ".";
};

inline Json transform_to_json(const RigidTransform& t) {
  Json m = Json::array();
  const Mat4 h = t.matrix();
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) m.push_back(h(r, c));
  return m;
}

inline RigidTransform transform_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 16)
    throw ConfigError("transform must be a 16-element row-major array");
  Mat4 h;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) h(r, c) = j.at(r * 4 + c).get<double>();
  RigidTransform t = RigidTransform::from_matrix(h);
  if (!t.is_valid(1e-6)) {
    // Repair mild numeric drift only; grossly non-rigid input is an error.
    if (!t.is_valid(1e-3)) throw ConfigError("transform is not rigid");
    t.orthonormalize();
  }
  return t;
}

inline SceneConfig parse_scene_config(const Json& j) {
  SceneConfig cfg;
  try {
    if (j.contains("scene")) {
      const auto& s = j.at("scene");
      detail::read_if(s, "ground_half_x", cfg.scene.ground_half_x);
      detail::read_if(s, "ground_half_y", cfg.scene.ground_half_y);
      if (s.contains("boxes")) {
        for (const auto& b : s.at("boxes")) {
          BoxSpec box;
          const auto he = b.at("half_extents");
          box.half_extents =
              Vec3(he.at(0).get<double>(), he.at(1).get<double>(),
                   he.at(2).get<double>());
          box.pose = transform_from_json(b.at("pose"));
          cfg.scene.boxes.push_back(box);
        }
      }
    }
    for (const auto& s : j.at("sensors")) {
      SensorSpec spec;
      spec.id = s.at("id").get<std::string>();
      const std::string kind = s.value("kind", "solid_state");
      if (kind == "rotating")
        spec.kind = SensorKind::Rotating;
      else if (kind == "solid_state")
        spec.kind = SensorKind::SolidState;
      else
        throw ConfigError("unknown sensor kind " + kind);
      spec.pose = transform_from_json(s.at("pose"));
      detail::read_if(s, "azimuth_step_deg", spec.azimuth_step_deg);
      detail::read_if(s, "channels", spec.channels);
      detail::read_if(s, "elevation_min_deg", spec.elevation_min_deg);
      detail::read_if(s, "elevation_max_deg", spec.elevation_max_deg);
      detail::read_if(s, "hfov_deg", spec.hfov_deg);
      detail::read_if(s, "vfov_deg", spec.vfov_deg);
      detail::read_if(s, "h_rays", spec.h_rays);
      detail::read_if(s, "v_rays", spec.v_rays);
      detail::read_if(s, "min_range", spec.min_range);
      detail::read_if(s, "max_range", spec.max_range);
      detail::read_if(s, "noise_sigma", spec.noise_sigma);
      detail::read_if(s, "seed", spec.seed);
      cfg.sensors.push_back(spec);
    }
    detail::read_if(j, "output_dir", cfg.output_dir);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (cfg.sensors.empty()) throw ConfigError("scene config has no sensors");
  return cfg;
}

inline Json scene_config_to_json(const SceneConfig& cfg) {
  Json j;
  j["scene"]["ground_half_x"] = cfg.scene.ground_half_x;
  j["scene"]["ground_half_y"] = cfg.scene.ground_half_y;
  j["scene"]["boxes"] = Json::array();
  for (const auto& b : cfg.scene.boxes)
    j["scene"]["boxes"].push_back(
        {{"half_extents",
          {b.half_extents.x(), b.half_extents.y(), b.half_extents.z()}},
         {"pose", transform_to_json(b.pose)}});
  j["sensors"] = Json::array();
  for (const auto& s : cfg.sensors) {
    Json sensor;
    sensor["id"] = s.id;
    sensor["kind"] =
        s.kind == SensorKind::Rotating ? "rotating" : "solid_state";
    sensor["pose"] = transform_to_json(s.pose);
    if (s.kind == SensorKind::Rotating) {
      sensor["azimuth_step_deg"] = s.azimuth_step_deg;
      sensor["channels"] = s.channels;
      sensor["elevation_min_deg"] = s.elevation_min_deg;
      sensor["elevation_max_deg"] = s.elevation_max_deg;
    } else {
      sensor["hfov_deg"] = s.hfov_deg;
      sensor["vfov_deg"] = s.vfov_deg;
      sensor["h_rays"] = s.h_rays;
      sensor["v_rays"] = s.v_rays;
    }
    sensor["min_range"] = s.min_range;
    sensor["max_range"] = s.max_range;
    sensor["noise_sigma"] = s.noise_sigma;
    sensor["seed"] = s.seed;
    j["sensors"].push_back(sensor);
  }
  j["output_dir"] = cfg.output_dir;
  return j;
}

inline SceneConfig load_scene_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scene config " + path);
  Json j;
  try {
    j = Json::parse(in);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
  return parse_scene_config(j);
}

}  // namespace mlcal
