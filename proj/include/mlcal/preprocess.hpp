#pragma once

#include "mlcal/kdtree.hpp"
#include "mlcal/types.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdint>
#include <map>
#include <tuple>
#include <vector>

namespace mlcal {

/// Centroid voxel filter. Cells are anchored at the origin
/// (cell = floor(coord / voxel_size) per axis); output is ordered ascending
/// lexicographically by (cell_x, cell_y, cell_z). Attribute channels are
/// dropped.
inline PointCloud voxel_downsample(const PointCloud& cloud,
                                   double voxel_size) {
  if (cloud.empty()) throw EmptyCloudError();
  if (voxel_size <= 0.0)
    throw InvalidParameterError("voxel_size must be positive");

  using Cell = std::tuple<std::int64_t, std::int64_t, std::int64_t>;
  std::map<Cell, std::pair<Vec3, std::size_t>> cells;
  for (const Vec3& p : cloud.points) {
    const Cell c{static_cast<std::int64_t>(std::floor(p.x() / voxel_size)),
                 static_cast<std::int64_t>(std::floor(p.y() / voxel_size)),
                 static_cast<std::int64_t>(std::floor(p.z() / voxel_size))};
    auto [it, inserted] = cells.try_emplace(c, Vec3::Zero(), 0);
    it->second.first += p;
    it->second.second += 1;
  }

  PointCloud out;
  out.frame_id = cloud.frame_id;
  out.points.reserve(cells.size());
  for (const auto& [cell, acc] : cells)
    out.points.push_back(acc.first / static_cast<double>(acc.second));
  return out;
}

namespace detail {

/// Smallest-eigenvalue eigenvector of the scatter matrix of the given
/// neighborhood; also reports whether the two smallest eigenvalues coincide.
inline std::pair<Vec3, bool> smallest_scatter_axis(
    const std::vector<Vec3>& points, const std::vector<KdTree::Neighbor>& nbrs) {
  Vec3 mean = Vec3::Zero();
  for (const auto& n : nbrs) mean += points[n.index];
  mean /= static_cast<double>(nbrs.size());
  Mat3 scatter = Mat3::Zero();
  for (const auto& n : nbrs) {
    const Vec3 d = points[n.index] - mean;
    scatter += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> eig(scatter);
  const Vec3 evals = eig.eigenvalues();  // ascending
  const bool degenerate = std::abs(evals[1] - evals[0]) <= 1e-12;
  return {eig.eigenvectors().col(0), degenerate};
}

}  // namespace detail

/// Per-point normals from the k-NN scatter matrix, oriented toward the
/// sensor origin (0,0,0). Degenerate neighborhoods (two coinciding smallest
/// eigenvalues) keep the solver's deterministic eigenvector and are flagged
/// when a flags vector is supplied.
inline PointCloud estimate_normals(const PointCloud& cloud, std::size_t k,
                                   std::vector<std::uint8_t>* degenerate_flags =
                                       nullptr) {
  if (k < 3) throw InvalidParameterError("normal estimation needs k >= 3");
  if (cloud.size() < k)
    throw InsufficientPointsError("cloud smaller than neighborhood size k");

  KdTree index(cloud.points);
  PointCloud out = cloud;
  out.normals.resize(cloud.size());
  if (degenerate_flags) degenerate_flags->assign(cloud.size(), 0);

  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto nbrs = index.nearest(cloud.points[i], k);
    auto [normal, degenerate] = detail::smallest_scatter_axis(cloud.points, nbrs);
    // Orient toward the sensor at the origin.
    if (normal.dot(cloud.points[i]) > 0.0) normal = -normal;
    out.normals[i] = normal;
    if (degenerate && degenerate_flags) (*degenerate_flags)[i] = 1;
  }
  return out;
}

/// Plane-to-plane covariance regularization: C = R diag(eps, 1, 1) R^T with
/// the local normal as R's first column. Estimates normals first if absent.
inline PointCloud estimate_covariances(const PointCloud& cloud, std::size_t k,
                                       double epsilon = 1e-3) {
  if (k < 4)
    throw InvalidParameterError("covariance estimation needs k >= 4");
  if (cloud.size() < k)
    throw InsufficientPointsError("cloud smaller than neighborhood size k");

  PointCloud out = cloud.has_normals() ? cloud : estimate_normals(cloud, k);
  out.covariances.resize(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Vec3& n = out.normals[i];
    // eps along the normal, 1 in-plane.
    out.covariances[i] =
        Mat3::Identity() + (epsilon - 1.0) * (n * n.transpose());
  }
  return out;
}

/// Rigid transform of all channels: points mapped, normals rotated,
/// covariances conjugated.
inline PointCloud apply_transform(const PointCloud& cloud,
                                  const RigidTransform& t) {
  PointCloud out = cloud;
  for (auto& p : out.points) p = t.apply(p);
  for (auto& n : out.normals) n = t.rotation * n;
  for (auto& c : out.covariances)
    c = t.rotation * c * t.rotation.transpose();
  return out;
}

/// Concatenation, a's points first. Attribute channels survive only when
/// present on both inputs. The result keeps a's frame id.
inline PointCloud merge(const PointCloud& a, const PointCloud& b) {
  PointCloud out;
  out.frame_id = a.frame_id;
  out.points = a.points;
  out.points.insert(out.points.end(), b.points.begin(), b.points.end());
  const bool both_normals =
      (a.has_normals() || a.empty()) && (b.has_normals() || b.empty());
  if (both_normals && (a.has_normals() || b.has_normals())) {
    out.normals = a.normals;
    out.normals.insert(out.normals.end(), b.normals.begin(), b.normals.end());
  }
  const bool both_covs =
      (a.has_covariances() || a.empty()) && (b.has_covariances() || b.empty());
  if (both_covs && (a.has_covariances() || b.has_covariances())) {
    out.covariances = a.covariances;
    out.covariances.insert(out.covariances.end(), b.covariances.begin(),
                           b.covariances.end());
  }
  return out;
}

}  // namespace mlcal
