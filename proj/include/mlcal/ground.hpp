#pragma once

#include "mlcal/gicp.hpp"
#include "mlcal/rng.hpp"
#include "mlcal/types.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace mlcal {

/// Normalized plane ax + by + cz + d = 0 with unit (a,b,c) and c >= 0
/// (normal toward a sensor above the ground).
struct PlaneModel {
  double a = 0.0, b = 0.0, c = 1.0, d = 0.0;

  Vec3 normal() const { return {a, b, c}; }

  double distance(const Vec3& p) const {
    return std::abs(a * p.x() + b * p.y() + c * p.z() + d);
  }

  static PlaneModel from_normal_point(const Vec3& n, const Vec3& p) {
    PlaneModel m;
    const double len = n.norm();
    Vec3 u = n / len;
    double d = -u.dot(p);
    if (u.z() < 0.0) {
      u = -u;
      d = -d;
    }
    m.a = u.x();
    m.b = u.y();
    m.c = u.z();
    m.d = d;
    return m;
  }
};

struct GroundCalibration {
  double roll = 0.0;    // radians
  double pitch = 0.0;   // radians
  double z_offset = 0.0;  // sensor height above ground, meters
};

struct GroundParams {
  double distance_threshold = 0.05;
  int max_iterations = 1000;
  std::uint64_t seed = 0;
  /// Accept only planes whose normal is within this angle of the sensor
  /// z-axis; keeps walls from winning the vote.
  double max_normal_angle = 30.0 * M_PI / 180.0;
  double min_inlier_ratio = 0.10;
};

/// Pitch of the sensor relative to the plane: atan2(a, sqrt(b^2 + c^2)).
inline double pitch_from_plane(const PlaneModel& plane) {
  return std::atan2(plane.a, std::sqrt(plane.b * plane.b + plane.c * plane.c));
}

/// Roll, the companion of pitch_from_plane: atan2(-b, c). Together they
/// satisfy Ry(-pitch) Rx(-roll) * (a,b,c) = (0,0,1) exactly.
inline double roll_from_plane(const PlaneModel& plane) {
  return std::atan2(-plane.b, plane.c);
}

/// The rotation that levels the sensor: Ry(-pitch) * Rx(-roll) maps the
/// fitted plane normal exactly to (0, 0, 1).
inline Mat3 leveling_rotation(double roll, double pitch) {
  return (Eigen::AngleAxisd(-pitch, Vec3::UnitY()) *
          Eigen::AngleAxisd(-roll, Vec3::UnitX()))
      .toRotationMatrix();
}

/// Seeded RANSAC plane fit with least-squares refit over the winning inlier
/// set. Iteration count adapts with the standard (1 - w^3) formula at 99.9%
/// confidence, capped at max_iterations. Hypotheses whose normal is farther
/// than max_normal_angle from the z-axis are rejected.
inline std::pair<PlaneModel, std::vector<std::size_t>> ransac_plane(
    const PointCloud& cloud, const GroundParams& params = {}) {
  const std::size_t n = cloud.size();
  if (n < 3) throw InsufficientPointsError("plane fit needs >= 3 points");
  if (params.distance_threshold <= 0.0)
    throw InvalidParameterError("distance_threshold must be positive");

  SplitMix64 rng(params.seed);
  const double min_cos = std::cos(params.max_normal_angle);

  PlaneModel best;
  std::size_t best_inliers = 0;
  bool found = false;

  int iterations = params.max_iterations;
  for (int iter = 0; iter < iterations; ++iter) {
    const std::size_t i0 = rng.next_index(n);
    const std::size_t i1 = rng.next_index(n);
    const std::size_t i2 = rng.next_index(n);
    if (i0 == i1 || i0 == i2 || i1 == i2) continue;
    const Vec3 normal = (cloud.points[i1] - cloud.points[i0])
                            .cross(cloud.points[i2] - cloud.points[i0]);
    if (normal.norm() < 1e-12) continue;
    const PlaneModel model =
        PlaneModel::from_normal_point(normal, cloud.points[i0]);
    if (model.c < min_cos) continue;

    std::size_t inliers = 0;
    for (const Vec3& p : cloud.points)
      if (model.distance(p) <= params.distance_threshold) ++inliers;

    if (inliers > best_inliers) {
      best_inliers = inliers;
      best = model;
      found = true;
      // Adaptive iteration bound at 99.9% confidence.
      const double w =
          static_cast<double>(inliers) / static_cast<double>(n);
      const double denom = std::log(1.0 - std::min(w * w * w, 1.0 - 1e-12));
      if (denom < 0.0) {
        const int needed = static_cast<int>(
            std::ceil(std::log(1.0 - 0.999) / denom));
        iterations = std::clamp(needed, iter + 1, params.max_iterations);
      }
    }
  }

  if (!found || static_cast<double>(best_inliers) <
                    params.min_inlier_ratio * static_cast<double>(n))
    throw NoPlaneFoundError();

  // Least-squares refit: smallest scatter eigenvector over the inliers.
  std::vector<std::size_t> inlier_idx;
  for (std::size_t i = 0; i < n; ++i)
    if (best.distance(cloud.points[i]) <= params.distance_threshold)
      inlier_idx.push_back(i);

  Vec3 mean = Vec3::Zero();
  for (std::size_t i : inlier_idx) mean += cloud.points[i];
  mean /= static_cast<double>(inlier_idx.size());
  Mat3 scatter = Mat3::Zero();
  for (std::size_t i : inlier_idx) {
    const Vec3 d = cloud.points[i] - mean;
    scatter += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> eig(scatter);
  PlaneModel refined =
      PlaneModel::from_normal_point(eig.eigenvectors().col(0), mean);
  if (refined.c < min_cos) refined = best;  // keep the gated hypothesis

  // Final inliers against the refined model.
  inlier_idx.clear();
  for (std::size_t i = 0; i < n; ++i)
    if (refined.distance(cloud.points[i]) <= params.distance_threshold)
      inlier_idx.push_back(i);
  return {refined, std::move(inlier_idx)};
}

/// Roll, pitch, and height above ground from the RANSAC plane.
inline GroundCalibration ground_calibrate(const PointCloud& cloud,
                                          const GroundParams& params = {}) {
  const auto [plane, inliers] = ransac_plane(cloud, params);
  GroundCalibration out;
  out.roll = roll_from_plane(plane);
  out.pitch = pitch_from_plane(plane);
  out.z_offset = std::abs(plane.d);
  return out;
}

/// Cross-check variant: registers the cloud's ground inliers against a flat
/// synthetic plane patch via GICP. RANSAC remains authoritative; this exists
/// to sanity-check roll/pitch/z on demand.
inline GroundCalibration ground_calibrate_gicp(const PointCloud& cloud,
                                               const GroundParams& params = {},
                                               const GicpParams& gicp_params =
                                                   {}) {
  const auto [plane, inlier_idx] = ransac_plane(cloud, params);

  PointCloud ground_points;
  for (std::size_t i : inlier_idx)
    ground_points.points.push_back(cloud.points[i]);

  // Flat patch at z = 0 covering the inlier footprint.
  double max_r = 1.0;
  for (const Vec3& p : ground_points.points)
    max_r = std::max(max_r, p.head<2>().norm());
  PointCloud flat;
  const double pitch = 0.25;
  for (double x = -max_r; x <= max_r; x += pitch)
    for (double y = -max_r; y <= max_r; y += pitch)
      flat.points.emplace_back(x, y, 0.0);

  // Seed with the RANSAC estimate.
  RigidTransform seed;
  seed.rotation = leveling_rotation(roll_from_plane(plane),
                                    pitch_from_plane(plane));
  seed.translation = Vec3(0, 0, std::abs(plane.d));
  const RegistrationResult reg = gicp(ground_points, flat, seed, gicp_params);

  // The registered transform maps sensor points onto z = 0, so the ground
  // plane in the sensor frame is row 2 of its rotation with offset t_z.
  // Going through the plane formulas keeps the result immune to the yaw
  // about z that a flat patch cannot constrain.
  PlaneModel refined;
  const Vec3 n = reg.transform.rotation.row(2).transpose();
  refined.a = n.x();
  refined.b = n.y();
  refined.c = n.z();
  refined.d = reg.transform.translation.z();
  GroundCalibration out;
  out.roll = roll_from_plane(refined);
  out.pitch = pitch_from_plane(refined);
  out.z_offset = std::abs(reg.transform.translation.z());
  return out;
}

}  // namespace mlcal
