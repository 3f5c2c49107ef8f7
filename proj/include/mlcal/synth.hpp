#pragma once

#include "mlcal/rng.hpp"
#include "mlcal/types.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace mlcal {

/// Axis-aligned box in its own frame, placed in the scene by a rigid pose.
struct BoxSpec {
  RigidTransform pose;
  Vec3 half_extents = Vec3::Ones();
};

/// Analytic scene: a finite ground rectangle at z = 0 plus boxes. Surface
/// labels: 0 = ground, i+1 = boxes[i].
struct SceneSpec {
  double ground_half_x = 30.0;
  double ground_half_y = 30.0;
  std::vector<BoxSpec> boxes;
};

enum class SensorKind { Rotating, SolidState };

struct SensorSpec {
  std::string id;
  SensorKind kind = SensorKind::SolidState;
  RigidTransform pose;  // ground truth, sensor -> scene

  // Rotating: full azimuth sweep with evenly spaced elevation channels.
  double azimuth_step_deg = 1.0;
  int channels = 16;
  double elevation_min_deg = -20.0;
  double elevation_max_deg = 5.0;

  // Solid state: centered rectangular ray grid.
  double hfov_deg = 90.0;
  double vfov_deg = 40.0;
  int h_rays = 180;
  int v_rays = 60;

  double min_range = 1.0;
  double max_range = 50.0;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
};

struct SyntheticScan {
  PointCloud cloud;  // sensor frame
  RigidTransform ground_truth_pose;
  std::vector<int> labels;  // surface label per point
};

namespace detail {

struct Hit {
  double range;
  int label;
};

inline std::optional<double> ray_ground(const SceneSpec& scene,
                                        const Vec3& origin, const Vec3& dir) {
  if (std::abs(dir.z()) < 1e-12) return std::nullopt;
  const double t = -origin.z() / dir.z();
  if (t <= 0.0) return std::nullopt;
  const Vec3 p = origin + t * dir;
  if (std::abs(p.x()) > scene.ground_half_x ||
      std::abs(p.y()) > scene.ground_half_y)
    return std::nullopt;
  return t;
}

inline std::optional<double> ray_box(const BoxSpec& box, const Vec3& origin,
                                     const Vec3& dir) {
  // Slab test in the box frame.
  const RigidTransform inv = box.pose.inverse();
  const Vec3 o = inv.apply(origin);
  const Vec3 d = inv.rotation * dir;
  double tmin = 0.0;
  double tmax = std::numeric_limits<double>::infinity();
  for (int axis = 0; axis < 3; ++axis) {
    const double h = box.half_extents[axis];
    if (std::abs(d[axis]) < 1e-12) {
      if (std::abs(o[axis]) > h) return std::nullopt;
      continue;
    }
    double t0 = (-h - o[axis]) / d[axis];
    double t1 = (h - o[axis]) / d[axis];
    if (t0 > t1) std::swap(t0, t1);
    tmin = std::max(tmin, t0);
    tmax = std::min(tmax, t1);
    if (tmin > tmax) return std::nullopt;
  }
  if (tmin <= 0.0) return std::nullopt;  // origin inside or behind
  return tmin;
}

inline std::optional<Hit> cast_ray(const SceneSpec& scene, const Vec3& origin,
                                   const Vec3& dir) {
  std::optional<Hit> best;
  if (const auto t = ray_ground(scene, origin, dir))
    best = Hit{*t, 0};
  for (std::size_t i = 0; i < scene.boxes.size(); ++i) {
    const auto t = ray_box(scene.boxes[i], origin, dir);
    if (t && (!best || *t < best->range))
      best = Hit{*t, static_cast<int>(i) + 1};
  }
  return best;
}

inline Vec3 ray_direction(double azimuth_rad, double elevation_rad) {
  const double ce = std::cos(elevation_rad);
  return {ce * std::cos(azimuth_rad), ce * std::sin(azimuth_rad),
          std::sin(elevation_rad)};
}

}  // namespace detail

/// Casts the sensor's ray grid from its ground-truth pose, keeps the nearest
/// intersection per ray within the range limits, adds seeded zero-mean
/// Gaussian radial noise (SplitMix64 + Box-Muller, one sequential stream per
/// sensor in fixed ray order), and expresses the points in the sensor frame.
inline SyntheticScan generate_scan(const SceneSpec& scene,
                                   const SensorSpec& sensor) {
  if (sensor.noise_sigma < 0.0)
    throw InvalidParameterError("noise_sigma must be >= 0");

  std::vector<Vec3> directions;  // sensor frame
  constexpr double deg = M_PI / 180.0;
  if (sensor.kind == SensorKind::Rotating) {
    if (sensor.azimuth_step_deg <= 0.0 || sensor.channels < 1)
      throw InvalidParameterError("rotating sensor grid");
    for (double az = 0.0; az < 360.0; az += sensor.azimuth_step_deg) {
      for (int ch = 0; ch < sensor.channels; ++ch) {
        const double frac =
            sensor.channels > 1
                ? static_cast<double>(ch) / (sensor.channels - 1)
                : 0.5;
        const double elev = sensor.elevation_min_deg +
                            frac * (sensor.elevation_max_deg -
                                    sensor.elevation_min_deg);
        directions.push_back(detail::ray_direction(az * deg, elev * deg));
      }
    }
  } else {
    if (sensor.h_rays < 1 || sensor.v_rays < 1 || sensor.hfov_deg <= 0.0 ||
        sensor.vfov_deg <= 0.0)
      throw InvalidParameterError("solid state sensor grid");
    for (int i = 0; i < sensor.h_rays; ++i) {
      const double az = sensor.h_rays > 1
                            ? -sensor.hfov_deg / 2.0 +
                                  sensor.hfov_deg * i / (sensor.h_rays - 1)
                            : 0.0;
      for (int j = 0; j < sensor.v_rays; ++j) {
        const double elev = sensor.v_rays > 1
                                ? -sensor.vfov_deg / 2.0 +
                                      sensor.vfov_deg * j / (sensor.v_rays - 1)
                                : 0.0;
        directions.push_back(detail::ray_direction(az * deg, elev * deg));
      }
    }
  }

  SplitMix64 rng(sensor.seed);
  SyntheticScan scan;
  scan.ground_truth_pose = sensor.pose;
  scan.cloud.frame_id = sensor.id;
  const Vec3 origin = sensor.pose.translation;
  for (const Vec3& dir_sensor : directions) {
    const Vec3 dir = sensor.pose.rotation * dir_sensor;
    const auto hit = detail::cast_ray(scene, origin, dir);
    if (!hit) continue;
    double range = hit->range;
    if (range < sensor.min_range || range > sensor.max_range) continue;
    if (sensor.noise_sigma > 0.0)
      range += sensor.noise_sigma * rng.next_gaussian();
    scan.cloud.points.push_back(range * dir_sensor);
    scan.labels.push_back(hit->label);
  }
  if (scan.cloud.empty()) throw EmptyScanError();
  return scan;
}

/// Scattered boxes sitting on the ground; geometry committed as constants so
/// fixtures are stable.
inline void add_box(SceneSpec& scene, double x, double y, double sx, double sy,
                    double sz, double yaw = 0.0) {
  BoxSpec box;
  box.half_extents = Vec3(sx / 2.0, sy / 2.0, sz / 2.0);
  box.pose = RigidTransform::from_rpy(0.0, 0.0, yaw, Vec3(x, y, sz / 2.0));
  scene.boxes.push_back(box);
}

struct CascadeFixture {
  SceneSpec scene;
  std::vector<SensorSpec> sensors;  // A, B, C, T (target last)
};

/// Four-sensor fixture whose FOV overlaps are exactly (A,B), (B,C), (C,T):
/// near-co-located solid-state sensors fanned out in yaw steps of 35
/// degrees with a 70 degree horizontal FOV, so neighbors share half their
/// FOV and non-neighbors share none. Sensors sit ~4 m up (mast-mounted) so
/// the plaza ground is a minority of each scan; a ground-dominated scan
/// lets grossly wrong poses score competitive fitness by sliding ground
/// onto ground.
inline CascadeFixture cascade_scene(double noise_sigma = 0.01) {
  CascadeFixture fx;
  // A bounded plaza: an unbounded ground plane would let a grossly wrong
  // pose still score a high fitness by sliding ground onto ground.
  fx.scene.ground_half_x = 10.0;
  fx.scene.ground_half_y = 10.0;
  auto& scene = fx.scene;

  // Building-scale structure in each pairwise-overlap wedge (azimuths ~5-30,
  // 40-65, 75-100 degrees): large walls, blocks and towers whose faces stay
  // stable under resampling from different viewpoints. Each wedge gets a
  // distinct layout: identical rotated layouts would make the scene
  // rotationally self-similar and let coarse alignment lock onto the wrong
  // wedge. The outermost (B/A) wedge is deliberately the richest and the
  // inner wedges the leanest: the last-calibrated sensor's fitness is scored
  // against the full merged cloud, so shared structure it can match must
  // outweigh structure it never sees.
  struct WedgeBox { double x, y, sx, sy, sz, yaw; };
  const std::vector<std::vector<WedgeBox>> layouts = {
      {   // T/C wedge (azimuth ~5-30 deg)
          {10.0, 3.5, 7.0, 0.5, 3.5, 0.35},  // long wall
          {14.2, 6.8, 0.5, 6.0, 3.0, 0.35},  // crossing wall (corner)
          {7.8, 2.2, 2.5, 2.5, 2.5, 1.1},    // kiosk block
          {17.0, 4.0, 3.0, 2.0, 3.2, 2.9},   // tall block
          {12.6, 4.9, 1.4, 1.4, 6.0, 0.85},  // tower
          {23.5, 4.5, 2.0, 2.0, 3.6, 0.7},   // far block
      },
      {   // C/B wedge (azimuth ~40-65 deg)
          {9.5, 4.0, 0.6, 5.5, 3.2, 0.5},    // wall along the wedge
          {13.0, 7.5, 4.5, 0.6, 2.6, 1.35},  // skew wall
          {11.2, 3.0, 1.6, 1.6, 5.5, 0.2},   // tower
          {16.5, 6.0, 2.2, 3.0, 3.0, 2.3},   // big block
          {19.0, 10.5, 5.5, 0.5, 4.4, 0.95}, // tall far wall
          {22.0, 6.5, 1.2, 1.2, 6.2, 0.0},   // far tower
      },
      {   // B/A wedge (azimuth ~75-100 deg); azimuth-staggered to limit
          // self-occlusion
          {9.8, 1.4, 6.0, 0.5, 3.2, 0.8},    // long wall
          {7.0, 3.3, 2.2, 2.2, 2.2, 0.3},    // kiosk block
          {12.2, 4.0, 1.5, 1.5, 6.0, 1.2},   // tower
          {14.6, 2.6, 0.6, 5.0, 3.0, 0.1},   // wall
          {16.0, 4.4, 4.0, 0.6, 2.7, 1.3},   // crossing wall (corner)
          {17.3, 7.5, 5.0, 0.6, 4.5, 2.0},   // tall far wall
          {21.4, 3.9, 2.4, 2.0, 3.4, 0.5},   // far block
          {22.8, 7.8, 1.6, 3.6, 4.0, 2.7},   // far slab
          {12.0, 1.0, 0.5, 4.5, 4.2, 1.0},   // near wall
          {20.0, 4.6, 4.5, 0.6, 4.6, 1.6},   // second far wall
          {14.0, 7.4, 3.5, 0.6, 4.0, 0.6},   // high side wall
          {13.5, 4.8, 1.5, 1.5, 6.4, 0.9},   // mid tower
          {18.5, 2.0, 1.5, 1.5, 6.4, 0.3},   // second tower
      },
  };
  const double wedge[] = {0.0, 35.0 * M_PI / 180.0, 70.0 * M_PI / 180.0};
  for (int w = 0; w < 3; ++w) {
    const double cw = std::cos(wedge[w]), sw = std::sin(wedge[w]);
    for (const auto& b : layouts[w])
      add_box(scene, b.x * cw - b.y * sw, b.x * sw + b.y * cw, b.sx, b.sy,
              b.sz, b.yaw + wedge[w]);
  }
  // Sector-interior structure seen by a single sensor only.
  add_box(scene, 11.0, -3.5, 1.0, 1.5, 2.0, 0.6);  // T interior
  add_box(scene, 15.5, -1.8, 1.3, 0.7, 1.9, 1.9);
  add_box(scene, 9.8, 9.5, 1.1, 1.1, 1.6, 1.5);    // C interior
  add_box(scene, 3.9, 13.2, 1.4, 0.9, 1.3, 2.6);   // B interior
  add_box(scene, -4.8, 13.0, 1.2, 1.2, 1.8, 0.4);  // A interior
  add_box(scene, -3.4, 18.0, 0.8, 1.5, 2.2, 2.1);

  const double deg = M_PI / 180.0;
  auto make_sensor = [&](const std::string& id, double yaw_deg, const Vec3& t,
                         std::uint64_t seed) {
    SensorSpec s;
    s.id = id;
    s.kind = SensorKind::SolidState;
    s.hfov_deg = 70.0;
    s.vfov_deg = 40.0;
    s.h_rays = 400;
    s.v_rays = 124;
    s.min_range = 1.5;
    s.max_range = 28.0;
    s.noise_sigma = noise_sigma;
    s.seed = seed;
    s.pose = RigidTransform::from_rpy(0.0, 10.0 * deg, yaw_deg * deg, t);
    return s;
  };

  fx.sensors.push_back(make_sensor("A", 105.0, Vec3(1.5, 0.6, 4.15), 41));
  fx.sensors.push_back(make_sensor("B", 70.0, Vec3(1.0, 0.4, 4.05), 42));
  fx.sensors.push_back(make_sensor("C", 35.0, Vec3(0.5, 0.2, 4.10), 43));
  fx.sensors.push_back(make_sensor("T", 0.0, Vec3(0.0, 0.0, 4.00), 44));
  return fx;
}

struct PairFixture {
  SceneSpec scene;
  SensorSpec source;
  SensorSpec target;
  RigidTransform relative;  // ground truth source -> target
};

/// Two-sensor fixture with roughly 40% FOV overlap and relative pose
/// yaw 30 deg, pitch 5 deg, t = (2, 1, 0.5).
inline PairFixture overlap_pair_scene(double noise_sigma = 0.01) {
  PairFixture fx;
  fx.scene.ground_half_x = 40.0;
  fx.scene.ground_half_y = 40.0;
  auto& scene = fx.scene;

  // Building-scale structure concentrated in the shared-view wedge (azimuth
  // roughly 20-40 deg from the sensors): large walls and blocks at varied
  // yaws whose faces and corners stay stable under resampling from
  // different viewpoints, plus street furniture for variety.
  add_box(scene, 10.0, 5.5, 7.0, 0.5, 3.5, 0.55);   // long wall
  add_box(scene, 13.8, 9.2, 0.5, 6.0, 3.0, 0.55);   // crossing wall (corner)
  add_box(scene, 7.5, 6.5, 2.5, 2.5, 2.5, 1.25);    // kiosk block
  add_box(scene, 16.5, 7.5, 3.0, 2.0, 4.0, 0.1);    // tall block
  add_box(scene, 12.0, 13.0, 5.0, 0.5, 2.8, 2.3);   // far wall
  add_box(scene, 18.0, 12.5, 2.0, 2.0, 3.2, 0.8);
  add_box(scene, 9.2, 9.8, 1.0, 1.0, 2.2, 0.9);
  add_box(scene, 14.5, 4.5, 1.2, 1.2, 1.6, 1.9);
  add_box(scene, 20.5, 10.5, 4.0, 1.5, 4.5, 1.45);  // far tall block
  add_box(scene, 23.0, 14.5, 3.0, 3.0, 3.6, 0.9);
  add_box(scene, 16.0, 13.8, 1.4, 2.4, 2.6, 2.0);
  add_box(scene, 25.0, 9.5, 1.8, 4.0, 4.2, 0.25);   // far wall slab
  add_box(scene, 12.8, 5.7, 1.4, 1.4, 6.0, 1.05);   // tower
  add_box(scene, 19.2, 14.8, 1.6, 1.6, 6.5, 0.45);  // tower
  // Structure seen by only one of the two sensors.
  add_box(scene, 10.0, -1.0, 4.0, 0.5, 2.5, -0.3);
  add_box(scene, 16.0, 1.0, 1.5, 1.5, 2.0, 1.7);
  add_box(scene, 5.5, 10.5, 3.5, 0.5, 2.6, 1.9);
  add_box(scene, 8.5, 14.5, 1.4, 1.4, 2.4, 0.6);

  const double deg = M_PI / 180.0;
  SensorSpec target;
  target.id = "target";
  target.kind = SensorKind::SolidState;
  target.hfov_deg = 50.0;
  target.vfov_deg = 40.0;
  target.h_rays = 500;
  target.v_rays = 180;
  target.min_range = 1.5;
  target.max_range = 30.0;
  target.noise_sigma = noise_sigma;
  target.seed = 7;
  target.pose = RigidTransform::from_rpy(0.0, 5.0 * deg, 15.0 * deg,
                                         Vec3(0.0, 0.0, 1.8));

  fx.relative = RigidTransform::from_rpy(0.0, 5.0 * deg, 30.0 * deg,
                                         Vec3(2.0, 1.0, 0.5));
  SensorSpec source = target;
  source.id = "source";
  source.seed = 8;
  source.pose = target.pose * fx.relative;

  fx.scene = scene;
  fx.source = source;
  fx.target = target;
  return fx;
}

}  // namespace mlcal
