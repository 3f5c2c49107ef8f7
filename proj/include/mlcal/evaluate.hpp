#pragma once

#include "mlcal/types.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace mlcal {

struct PoseError {
  Vec3 translation_error = Vec3::Zero();  // estimate - truth, per axis
  Vec3 rotation_error = Vec3::Zero();     // (roll, pitch, yaw), radians
  double total_angle = 0.0;               // relative rotation angle, [0, pi]
};

/// How the per-axis rotation error is decomposed. The relative-rotation
/// total angle is reported either way.
enum class RotationErrorMode {
  RelativeEuler,       // ZYX Euler angles of truth^T * estimate
  AbsoluteEulerDelta,  // differences of absolute ZYX Euler angles
};

inline PoseError pose_error(const RigidTransform& estimate,
                            const RigidTransform& truth,
                            RotationErrorMode mode =
                                RotationErrorMode::RelativeEuler) {
  PoseError e;
  e.translation_error = estimate.translation - truth.translation;
  const Mat3 rel = truth.rotation.transpose() * estimate.rotation;
  e.total_angle =
      std::acos(std::clamp((rel.trace() - 1.0) / 2.0, -1.0, 1.0));
  if (mode == RotationErrorMode::RelativeEuler) {
    RigidTransform r;
    r.rotation = rel;
    e.rotation_error = r.rpy();
  } else {
    e.rotation_error = estimate.rpy() - truth.rpy();
  }
  return e;
}

struct ErrorReport {
  struct Entry {
    std::string sensor_id;
    std::string scene_id;
    PoseError error;
  };
  std::vector<Entry> table;
  Vec3 translation_rmse = Vec3::Zero();  // per axis, meters
  Vec3 rotation_rmse = Vec3::Zero();     // per axis, radians
  double total_angle_rmse = 0.0;
};

/// Per-axis RMSE over all (sensor, scene) entries.
inline ErrorReport aggregate_rmse(const std::vector<ErrorReport::Entry>& table) {
  if (table.empty()) throw EmptyInputError();
  ErrorReport report;
  report.table = table;
  Vec3 t2 = Vec3::Zero(), r2 = Vec3::Zero();
  double a2 = 0.0;
  for (const auto& entry : table) {
    t2 += entry.error.translation_error.cwiseAbs2();
    r2 += entry.error.rotation_error.cwiseAbs2();
    a2 += entry.error.total_angle * entry.error.total_angle;
  }
  const double n = static_cast<double>(table.size());
  report.translation_rmse = (t2 / n).cwiseSqrt();
  report.rotation_rmse = (r2 / n).cwiseSqrt();
  report.total_angle_rmse = std::sqrt(a2 / n);
  return report;
}

inline ErrorReport aggregate_rmse(const std::vector<PoseError>& errors) {
  std::vector<ErrorReport::Entry> table;
  table.reserve(errors.size());
  for (std::size_t i = 0; i < errors.size(); ++i)
    table.push_back({"sensor" + std::to_string(i), "", errors[i]});
  return aggregate_rmse(table);
}

}  // namespace mlcal
