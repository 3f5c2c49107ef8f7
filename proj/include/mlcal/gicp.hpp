#pragma once

#include "mlcal/kdtree.hpp"
#include "mlcal/preprocess.hpp"
#include "mlcal/types.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mlcal {

struct GicpParams {
  double max_correspondence_distance = 1.0;
  int max_iterations = 64;
  double transformation_epsilon = 1e-8;
  double fitness_threshold = 0.2;
  double covariance_epsilon = 1e-3;
  std::size_t neighbor_count = 20;
  /// Optional voxel pitch applied to the clouds before fine registration;
  /// 0 disables (full resolution).
  double fine_voxel_size = 0.0;

  void validate() const {
    if (max_correspondence_distance <= 0.0)
      throw InvalidParameterError("max_correspondence_distance must be > 0");
    if (max_iterations <= 0)
      throw InvalidParameterError("max_iterations must be > 0");
    if (transformation_epsilon <= 0.0)
      throw InvalidParameterError("transformation_epsilon must be > 0");
    if (fitness_threshold <= 0.0 || fitness_threshold >= 1.0)
      throw InvalidParameterError("fitness_threshold must be in (0, 1)");
    if (covariance_epsilon <= 0.0)
      throw InvalidParameterError("covariance_epsilon must be > 0");
    if (neighbor_count < 4)
      throw InvalidParameterError("neighbor_count must be >= 4");
  }
};

struct RegistrationResult {
  RigidTransform transform;  // source -> target
  double fitness = 0.0;      // inlier pairs / target size
  double inlier_rmse = 0.0;
  bool converged = false;
  int iterations = 0;
  /// Per Gauss-Newton step, the objective before and after the accepted
  /// update, both evaluated at that step's fixed correspondences and
  /// weights.
  std::vector<std::pair<double, double>> step_objectives;
};

/// Per-sensor calibration into the target frame, in acceptance order.
struct CalibrationSet {
  struct Entry {
    RigidTransform transform;
    double fitness = 0.0;
    int order = 0;
  };
  std::string target_id;
  std::map<std::string, Entry> entries;
};

namespace detail {

struct GicpPair {
  Vec3 source;       // source point, source frame
  Vec3 target;       // matched target point
  Mat3 source_cov;
  Mat3 target_cov;
};

inline double gicp_objective(const std::vector<GicpPair>& pairs,
                             const std::vector<Mat3>& weights,
                             const RigidTransform& pose) {
  double f = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const Vec3 r = pose.apply(pairs[i].source) - pairs[i].target;
    f += r.dot(weights[i] * r);
  }
  return f;
}

}  // namespace detail

/// Plane-to-plane GICP: iterates nearest-neighbor correspondences and a
/// Gauss-Newton step on SE(3) minimizing sum d^T (C_t + R C_s R^T)^-1 d.
/// fitness = inlier pairs at the final pose / |target|. Zero correspondences
/// at the initial pose is not an error; it returns fitness 0 and
/// converged == false.
inline RegistrationResult gicp(const PointCloud& source,
                               const PointCloud& target,
                               const RigidTransform& initial = {},
                               const GicpParams& params = {}) {
  params.validate();
  if (source.size() < params.neighbor_count ||
      target.size() < params.neighbor_count)
    throw InsufficientPointsError("gicp needs >= neighbor_count points");

  const PointCloud src =
      source.has_covariances()
          ? source
          : estimate_covariances(source, params.neighbor_count,
                                 params.covariance_epsilon);
  const PointCloud tgt =
      target.has_covariances()
          ? target
          : estimate_covariances(target, params.neighbor_count,
                                 params.covariance_epsilon);

  KdTree tgt_index(tgt.points);
  const double max_d = params.max_correspondence_distance;

  RegistrationResult result;
  result.transform = initial;

  auto find_pairs = [&](const RigidTransform& at, double search_d) {
    std::vector<detail::GicpPair> pairs;
    pairs.reserve(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) {
      const Vec3 p = at.apply(src.points[i]);
      const auto nn = tgt_index.nearest(p, 1);
      if (nn[0].distance <= search_d)
        pairs.push_back({src.points[i], tgt.points[nn[0].index],
                         src.covariances[i], tgt.covariances[nn[0].index]});
    }
    return pairs;
  };

  // Coarse-to-fine correspondence gating. Where the clouds only partially
  // overlap, points outside the shared region latch onto boundary points at
  // the full gate and bias the pose; shrinking the gate once roughly
  // converged limits that to a thin boundary band. Fitness is still scored
  // at the full configured distance below.
  const double schedule[] = {max_d, max_d / 3.0, max_d / 8.0};
  for (const double search_d : schedule) {
    const bool first_stage = search_d == max_d;
    result.converged = false;
    // Objectives of the two previous iterations, to catch period-two
    // correspondence flips that would otherwise oscillate forever.
    double prev_before = std::numeric_limits<double>::infinity();
    double prev2_before = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < params.max_iterations; ++iter) {
      ++result.iterations;
      const auto pairs = find_pairs(result.transform, search_d);
      if (pairs.empty()) {
        if (!first_stage) break;  // keep the previous stage's pose
        result.converged = false;
        result.fitness = 0.0;
        result.inlier_rmse = 0.0;
        return result;
      }

      // Mahalanobis weights at the current rotation, fixed for this step.
      const Mat3& rot = result.transform.rotation;
      std::vector<Mat3> weights(pairs.size());
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        const Mat3 m =
            pairs[i].target_cov + rot * pairs[i].source_cov * rot.transpose();
        weights[i] = m.llt().solve(Mat3::Identity());
      }

      Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
      Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        const Vec3 rp = rot * pairs[i].source;
        const Vec3 r = rp + result.transform.translation - pairs[i].target;
        Eigen::Matrix<double, 3, 6> j;
        j.block<3, 3>(0, 0) = -skew(rp);
        j.block<3, 3>(0, 3) = Mat3::Identity();
        const Eigen::Matrix<double, 3, 6> wj = weights[i] * j;
        h += j.transpose() * wj;
        g += wj.transpose() * r;
      }
      const Eigen::Matrix<double, 6, 1> delta = -h.ldlt().solve(g);

      const double before =
          detail::gicp_objective(pairs, weights, result.transform);

      // Step halving keeps the fixed-correspondence objective non-increasing.
      double alpha = 1.0;
      RigidTransform updated = result.transform;
      double after = before;
      for (int halving = 0; halving < 12; ++halving) {
        RigidTransform trial;
        trial.rotation =
            rotation_exp(alpha * delta.head<3>()) * result.transform.rotation;
        trial.translation = result.transform.translation + alpha * delta.tail<3>();
        trial.orthonormalize();
        const double f = detail::gicp_objective(pairs, weights, trial);
        if (f <= before) {
          updated = trial;
          after = f;
          break;
        }
        alpha *= 0.5;
      }
      result.transform = updated;
      result.step_objectives.emplace_back(before, after);

      const bool cycled =
          std::abs(before - prev_before) <= 1e-9 * std::max(before, 1.0) ||
          std::abs(before - prev2_before) <= 1e-9 * std::max(before, 1.0);
      prev2_before = prev_before;
      prev_before = before;
      if (delta.norm() < params.transformation_epsilon ||
          before - after <= 1e-10 * std::max(before, 1.0) || cycled) {
        result.converged = true;
        break;
      }
    }
  }

  // Fitness and RMSE at the final pose.
  std::size_t inliers = 0;
  double sq_sum = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const Vec3 p = result.transform.apply(src.points[i]);
    const auto nn = tgt_index.nearest(p, 1);
    if (nn[0].distance <= max_d) {
      ++inliers;
      sq_sum += nn[0].distance * nn[0].distance;
    }
  }
  result.fitness =
      static_cast<double>(inliers) / static_cast<double>(tgt.size());
  result.inlier_rmse =
      inliers > 0 ? std::sqrt(sq_sum / static_cast<double>(inliers)) : 0.0;
  if (inliers == 0) result.converged = false;
  return result;
}

namespace detail {

struct Candidate {
  std::string source;
  std::string target;  // a sensor id, or the running target frame
  RegistrationResult result;
};

}  // namespace detail

/// Fitness-ordered greedy match-and-merge calibration of every sensor into
/// the target frame. All ordered sensor pairs are registered first; the
/// best candidate above the fitness threshold is accepted, its cloud merged
/// into the running target cloud, and the remaining sensors re-registered
/// against the merged cloud (seeded with their best prior estimate,
/// composed into the target frame where possible). Candidates between two
/// non-target sensors seed those compositions but are never accepted
/// directly, since only target-frame transforms can be recorded.
inline CalibrationSet calibrate_all(
    const std::map<std::string, PointCloud>& clouds,
    const std::string& target_id,
    const std::map<std::pair<std::string, std::string>, RigidTransform>&
        seeds = {},
    const GicpParams& params = {}) {
  params.validate();
  if (!clouds.count(target_id))
    throw InvalidParameterError("target_id not among sensors");
  if (clouds.size() < 2)
    throw InvalidParameterError("calibration needs at least 2 sensors");

  // Precompute covariances once per input cloud.
  std::map<std::string, PointCloud> prepared;
  for (const auto& [id, cloud] : clouds) {
    PointCloud c = params.fine_voxel_size > 0.0
                       ? voxel_downsample(cloud, params.fine_voxel_size)
                       : cloud;
    prepared.emplace(id, estimate_covariances(c, params.neighbor_count,
                                              params.covariance_epsilon));
  }

  auto seed_for = [&](const std::string& s, const std::string& t) {
    const auto it = seeds.find({s, t});
    return it != seeds.end() ? it->second : RigidTransform::identity();
  };

  std::vector<detail::Candidate> candidates;
  for (const auto& [sid, scloud] : prepared)
    for (const auto& [tid, tcloud] : prepared)
      if (sid != tid)
        candidates.push_back(
            {sid, tid, gicp(scloud, tcloud, seed_for(sid, tid), params)});

  CalibrationSet out;
  out.target_id = target_id;
  out.entries[target_id] = {RigidTransform::identity(), 1.0, 0};

  PointCloud merged = prepared.at(target_id);
  std::vector<std::string> uncalibrated;
  for (const auto& [id, c] : prepared)
    if (id != target_id) uncalibrated.push_back(id);

  int order = 1;
  while (!uncalibrated.empty()) {
    // Only candidates with the running target frame on one side are
    // acceptable; ties broken lexicographically by (source, target).
    const detail::Candidate* best = nullptr;
    for (const auto& c : candidates) {
      if (c.source != target_id && c.target != target_id) continue;
      if (!best || c.result.fitness > best->result.fitness ||
          (c.result.fitness == best->result.fitness &&
           std::pair(c.source, c.target) < std::pair(best->source, best->target)))
        best = &c;
    }
    if (!best || best->result.fitness < params.fitness_threshold)
      throw PartialCalibrationError(uncalibrated);

    std::string winner = best->source;
    RigidTransform transform = best->result.transform;
    const double fitness = best->result.fitness;
    if (winner == target_id) {  // swap source and target, invert
      winner = best->target;
      transform = transform.inverse();
    }

    out.entries[winner] = {transform, fitness, order++};
    merged = merge(merged, apply_transform(prepared.at(winner), transform));
    // Neighborhoods change at the seams; refresh the merged covariances.
    merged.normals.clear();
    merged.covariances.clear();
    merged = estimate_covariances(merged, params.neighbor_count,
                                  params.covariance_epsilon);
    std::erase(uncalibrated, winner);

    // Best prior estimate per remaining sensor, expressed in the target
    // frame via composition through already calibrated sensors. Collected
    // before the winner's candidates are dropped so a chain like
    // (B, winner) still seeds B's re-registration.
    std::map<std::string, RigidTransform> next_seeds;
    for (const std::string& id : uncalibrated) {
      RigidTransform seed;
      double seed_fitness = -1.0;
      for (const auto& c : candidates) {
        if (c.source != id) continue;
        std::optional<RigidTransform> into_target;
        if (c.target == target_id) {
          into_target = c.result.transform;
        } else if (out.entries.count(c.target)) {
          into_target = out.entries.at(c.target).transform * c.result.transform;
        }
        if (into_target && c.result.fitness > seed_fitness) {
          seed_fitness = c.result.fitness;
          seed = *into_target;
        }
      }
      next_seeds[id] = seed;
    }

    std::erase_if(candidates, [&](const detail::Candidate& c) {
      return c.source == winner || c.target == winner;
    });

    // Re-register every remaining sensor against the merged cloud. All
    // candidates touching the target frame are replaced: the standalone
    // target cloud no longer exists, so the initial reverse (target ->
    // sensor) candidates are stale and must not stay acceptable.
    std::erase_if(candidates, [&](const detail::Candidate& c) {
      return c.source == target_id || c.target == target_id;
    });
    for (const std::string& id : uncalibrated)
      candidates.push_back(
          {id, target_id, gicp(prepared.at(id), merged, next_seeds.at(id), params)});
  }
  return out;
}

}  // namespace mlcal
