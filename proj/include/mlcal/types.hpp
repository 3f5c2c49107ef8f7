#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mlcal {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct CalibrationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmptyCloudError : CalibrationError {
  EmptyCloudError() : CalibrationError("empty point cloud") {}
};

struct InvalidParameterError : CalibrationError {
  explicit InvalidParameterError(const std::string& what)
      : CalibrationError("invalid parameter: " + what) {}
};

struct InsufficientPointsError : CalibrationError {
  explicit InsufficientPointsError(const std::string& what)
      : CalibrationError("insufficient points: " + what) {}
};

struct MissingNormalsError : CalibrationError {
  MissingNormalsError() : CalibrationError("cloud has no normals") {}
};

struct NoFeaturesError : CalibrationError {
  NoFeaturesError() : CalibrationError("no valid feature descriptors") {}
};

struct NoCorrespondencesError : CalibrationError {
  NoCorrespondencesError() : CalibrationError("no mutual feature matches") {}
};

struct DegenerateCorrespondencesError : CalibrationError {
  DegenerateCorrespondencesError()
      : CalibrationError("fewer than 3 consistent correspondences") {}
};

struct DegenerateGeometryError : CalibrationError {
  DegenerateGeometryError()
      : CalibrationError("correspondence geometry is collinear") {}
};

struct NoPlaneFoundError : CalibrationError {
  NoPlaneFoundError() : CalibrationError("no ground plane found") {}
};

struct EmptyScanError : CalibrationError {
  EmptyScanError() : CalibrationError("no rays intersected the scene") {}
};

struct EmptyInputError : CalibrationError {
  EmptyInputError() : CalibrationError("empty input sequence") {}
};

struct PartialCalibrationError : CalibrationError {
  std::vector<std::string> uncalibrated;
  explicit PartialCalibrationError(std::vector<std::string> ids)
      : CalibrationError("calibration incomplete, uncalibrated sensors: " +
                         join(ids)),
        uncalibrated(std::move(ids)) {}

 private:
  static std::string join(const std::vector<std::string>& ids) {
    std::string s;
    for (const auto& id : ids) {
      if (!s.empty()) s += ", ";
      s += id;
    }
    return s;
  }
};

struct ParseError : CalibrationError {
  int line;
  ParseError(int line_, const std::string& reason)
      : CalibrationError("parse error at line " + std::to_string(line_) +
                         ": " + reason),
        line(line_) {}
};

struct UnsupportedFormatError : CalibrationError {
  explicit UnsupportedFormatError(const std::string& what)
      : CalibrationError("unsupported format: " + what) {}
};

struct IoError : CalibrationError {
  explicit IoError(const std::string& what) : CalibrationError(what) {}
};

struct ConfigError : CalibrationError {
  explicit ConfigError(const std::string& what)
      : CalibrationError("config error: " + what) {}
};

// ---------------------------------------------------------------------------
// RigidTransform
// ---------------------------------------------------------------------------

/// SE(3) pose: orthonormal rotation plus translation in meters.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  static RigidTransform from_matrix(const Mat4& m) {
    RigidTransform t;
    t.rotation = m.block<3, 3>(0, 0);
    t.translation = m.block<3, 1>(0, 3);
    return t;
  }

  /// Rotation from ZYX Euler angles (roll about x, pitch about y, yaw
  /// about z, applied as Rz * Ry * Rx).
  static RigidTransform from_rpy(double roll, double pitch, double yaw,
                                 const Vec3& translation = Vec3::Zero()) {
    RigidTransform t;
    t.rotation = (Eigen::AngleAxisd(yaw, Vec3::UnitZ()) *
                  Eigen::AngleAxisd(pitch, Vec3::UnitY()) *
                  Eigen::AngleAxisd(roll, Vec3::UnitX()))
                     .toRotationMatrix();
    t.translation = translation;
    return t;
  }

  Mat4 matrix() const {
    Mat4 m = Mat4::Identity();
    m.block<3, 3>(0, 0) = rotation;
    m.block<3, 1>(0, 3) = translation;
    return m;
  }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  RigidTransform inverse() const {
    RigidTransform t;
    t.rotation = rotation.transpose();
    t.translation = -(t.rotation * translation);
    return t;
  }

  /// Composition: (a * b).apply(p) == a.apply(b.apply(p)).
  friend RigidTransform operator*(const RigidTransform& a,
                                  const RigidTransform& b) {
    RigidTransform t;
    t.rotation = a.rotation * b.rotation;
    t.translation = a.rotation * b.translation + a.translation;
    return t;
  }

  /// ZYX Euler decomposition, returns (roll, pitch, yaw).
  Vec3 rpy() const {
    double pitch = std::asin(std::clamp(-rotation(2, 0), -1.0, 1.0));
    double roll = std::atan2(rotation(2, 1), rotation(2, 2));
    double yaw = std::atan2(rotation(1, 0), rotation(0, 0));
    return {roll, pitch, yaw};
  }

  bool is_valid(double tol = 1e-9) const {
    const Mat3 d = rotation.transpose() * rotation - Mat3::Identity();
    return d.norm() < tol && std::abs(rotation.determinant() - 1.0) < tol &&
           translation.allFinite();
  }

  /// Projects the rotation back onto SO(3) via SVD.
  void orthonormalize() {
    Eigen::JacobiSVD<Mat3> svd(rotation,
                               Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 r = svd.matrixU() * svd.matrixV().transpose();
    if (r.determinant() < 0) {
      Mat3 flip = Mat3::Identity();
      flip(2, 2) = -1.0;
      r = svd.matrixU() * flip * svd.matrixV().transpose();
    }
    rotation = r;
  }
};

/// so(3) exponential map.
inline Mat3 rotation_exp(const Vec3& omega) {
  const double angle = omega.norm();
  if (angle < 1e-12) {
    Mat3 r = Mat3::Identity();
    r(0, 1) = -omega.z();
    r(1, 0) = omega.z();
    r(0, 2) = omega.y();
    r(2, 0) = -omega.y();
    r(1, 2) = -omega.x();
    r(2, 1) = omega.x();
    return r;
  }
  return Eigen::AngleAxisd(angle, omega / angle).toRotationMatrix();
}

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

// ---------------------------------------------------------------------------
// PointCloud
// ---------------------------------------------------------------------------

/// Point cloud with optional per-point unit normals and 3x3 covariances.
/// Attribute channels, when present, have the same length as points.
struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;
  std::vector<Mat3> covariances;
  std::string frame_id;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_normals() const { return normals.size() == points.size() && !points.empty(); }
  bool has_covariances() const {
    return covariances.size() == points.size() && !points.empty();
  }
};

}  // namespace mlcal
