#pragma once

#include "mlcal/fpfh.hpp"
#include "mlcal/preprocess.hpp"
#include "mlcal/types.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace mlcal {

/// Feature matches between a source and a target cloud, with descriptor-space
/// L2 distances.
struct CorrespondenceSet {
  std::vector<std::pair<int, int>> pairs;  // (source_index, target_index)
  std::vector<double> distances;

  std::size_t size() const { return pairs.size(); }
};

struct CoarseResult {
  RigidTransform transform;
  CorrespondenceSet inlier_pairs;
  std::size_t inlier_count = 0;
  bool converged = true;
  bool success = true;
  std::string failure_reason;
};

struct CoarseParams {
  double voxel_size = 0.35;
  double fpfh_radius_factor = 5.0;
  double noise_bound = 0.35;  // defaults to the voxel pitch
  std::size_t normal_k = 20;
};

/// Mutual nearest neighbors in 33-d descriptor space. Invalid (all-zero)
/// descriptors are excluded on both sides.
inline CorrespondenceSet match_features(const FeatureCloud& source,
                                        const FeatureCloud& target) {
  std::vector<int> src_ids, tgt_ids;
  for (std::size_t i = 0; i < source.descriptors.size(); ++i)
    if (source.descriptors[i].valid) src_ids.push_back(static_cast<int>(i));
  for (std::size_t j = 0; j < target.descriptors.size(); ++j)
    if (target.descriptors[j].valid) tgt_ids.push_back(static_cast<int>(j));
  if (src_ids.empty() || tgt_ids.empty()) throw NoFeaturesError();

  const int ns = static_cast<int>(src_ids.size());
  const int nt = static_cast<int>(tgt_ids.size());

  // Blocked GEMM distance computation: d^2 = |s|^2 + |t|^2 - 2 s.t. The GEMM
  // form loses precision through cancellation, so each approximate row/column
  // minimum is re-ranked exactly over the candidates within a tolerance band.
  Eigen::MatrixXd s(kFpfhDim, ns), t(kFpfhDim, nt);
  for (int i = 0; i < ns; ++i)
    for (int b = 0; b < kFpfhDim; ++b)
      s(b, i) = source.descriptors[src_ids[i]].bins[b];
  for (int j = 0; j < nt; ++j)
    for (int b = 0; b < kFpfhDim; ++b)
      t(b, j) = target.descriptors[tgt_ids[j]].bins[b];
  const Eigen::VectorXd s2 = s.colwise().squaredNorm();
  const Eigen::VectorXd t2 = t.colwise().squaredNorm();

  auto exact_d2 = [&](int i, int j) {
    double d = 0.0;
    for (int b = 0; b < kFpfhDim; ++b) {
      const double diff = source.descriptors[src_ids[i]].bins[b] -
                          target.descriptors[tgt_ids[j]].bins[b];
      d += diff * diff;
    }
    return d;
  };
  auto band = [&](int i, int j) {
    return 1e-9 * (s2[i] + t2[j]) + 1e-12;
  };

  std::vector<double> best_src_d(ns, std::numeric_limits<double>::infinity());
  std::vector<double> best_tgt_d(nt, std::numeric_limits<double>::infinity());

  constexpr int kBlock = 512;
  auto for_each_block = [&](auto&& visit) {
    for (int j0 = 0; j0 < nt; j0 += kBlock) {
      const int jn = std::min(kBlock, nt - j0);
      Eigen::MatrixXd d2 = -2.0 * (s.transpose() * t.middleCols(j0, jn));
      d2.colwise() += s2;
      d2.rowwise() += t2.segment(j0, jn).transpose();
      for (int jj = 0; jj < jn; ++jj)
        for (int i = 0; i < ns; ++i) visit(i, j0 + jj, d2(i, jj));
    }
  };

  // Pass 1: approximate minima per row and column.
  for_each_block([&](int i, int j, double d) {
    best_src_d[i] = std::min(best_src_d[i], d);
    best_tgt_d[j] = std::min(best_tgt_d[j], d);
  });

  // Pass 2: exact argmin among near-minimal candidates. Ties prefer the
  // same original point index, then the lower index — this makes self
  // matching return the identity pairing even for duplicate descriptors.
  std::vector<int> best_for_src(ns, -1), best_for_tgt(nt, -1);
  std::vector<double> exact_src(ns, std::numeric_limits<double>::infinity());
  std::vector<double> exact_tgt(nt, std::numeric_limits<double>::infinity());
  auto better = [](double d, int cand_id, int own_id, double cur_d,
                   int cur_id) {
    if (cur_id < 0 || d < cur_d) return true;
    if (d > cur_d) return false;
    if ((cand_id == own_id) != (cur_id == own_id)) return cand_id == own_id;
    return cand_id < cur_id;
  };
  for_each_block([&](int i, int j, double d) {
    const bool row_cand = d <= best_src_d[i] + band(i, j);
    const bool col_cand = d <= best_tgt_d[j] + band(i, j);
    if (!row_cand && !col_cand) return;
    const double ex = exact_d2(i, j);
    if (row_cand &&
        better(ex, tgt_ids[j], src_ids[i], exact_src[i],
               best_for_src[i] >= 0 ? tgt_ids[best_for_src[i]] : -1)) {
      exact_src[i] = ex;
      best_for_src[i] = j;
    }
    if (col_cand &&
        better(ex, src_ids[i], tgt_ids[j], exact_tgt[j],
               best_for_tgt[j] >= 0 ? src_ids[best_for_tgt[j]] : -1)) {
      exact_tgt[j] = ex;
      best_for_tgt[j] = i;
    }
  });

  CorrespondenceSet out;
  for (int i = 0; i < ns; ++i) {
    const int j = best_for_src[i];
    if (j >= 0 && best_for_tgt[j] == i) {
      out.pairs.emplace_back(src_ids[i], tgt_ids[j]);
      out.distances.push_back(std::sqrt(exact_src[i]));
    }
  }
  if (out.pairs.empty()) throw NoCorrespondencesError();
  return out;
}

/// Pairwise rigid-length consistency pruning: correspondences u=(i,j) and
/// v=(k,l) are compatible iff | |p_i-p_k| - |q_j-q_l| | <= 2*noise_bound.
/// Returns the greedy maximum-clique approximation of the compatibility
/// graph (repeatedly pick the highest-degree vertex, restrict to its
/// neighborhood). Deterministic via index tie-breaking.
inline CorrespondenceSet prune_correspondences(const CorrespondenceSet& pairs,
                                               const PointCloud& source,
                                               const PointCloud& target,
                                               double noise_bound) {
  const std::size_t n = pairs.size();
  if (n < 3) throw DegenerateCorrespondencesError();

  const std::size_t words = (n + 63) / 64;
  std::vector<std::uint64_t> adj(n * words, 0);
  auto link = [&](std::size_t a, std::size_t b) {
    adj[a * words + b / 64] |= std::uint64_t{1} << (b % 64);
    adj[b * words + a / 64] |= std::uint64_t{1} << (a % 64);
  };
  const double bound = 2.0 * noise_bound;
  for (std::size_t u = 0; u < n; ++u) {
    const Vec3& pu = source.points[pairs.pairs[u].first];
    const Vec3& qu = target.points[pairs.pairs[u].second];
    for (std::size_t v = u + 1; v < n; ++v) {
      const Vec3& pv = source.points[pairs.pairs[v].first];
      const Vec3& qv = target.points[pairs.pairs[v].second];
      if (std::abs((pu - pv).norm() - (qu - qv).norm()) <= bound) link(u, v);
    }
  }

  auto contains = [&](const std::vector<std::uint64_t>& set, std::size_t v) {
    return (set[v / 64] >> (v % 64)) & 1;
  };

  // One run of the greedy restriction: force `seed` as the first pick, then
  // repeatedly keep the highest-degree vertex of the remaining subgraph and
  // drop its non-neighbors.
  auto run_from = [&](std::size_t seed) {
    std::vector<std::uint64_t> candidates(words, ~std::uint64_t{0});
    if (n % 64 != 0)
      candidates[words - 1] = (std::uint64_t{1} << (n % 64)) - 1;
    auto degree_within = [&](std::size_t v) {
      std::size_t d = 0;
      for (std::size_t w = 0; w < words; ++w)
        d += static_cast<std::size_t>(
            __builtin_popcountll(adj[v * words + w] & candidates[w]));
      return d;
    };
    std::vector<std::size_t> clique;
    std::size_t pick = seed;
    while (true) {
      clique.push_back(pick);
      for (std::size_t w = 0; w < words; ++w)
        candidates[w] &= adj[pick * words + w];
      candidates[pick / 64] &= ~(std::uint64_t{1} << (pick % 64));
      std::size_t best = n, best_deg = 0;
      for (std::size_t v = 0; v < n; ++v) {
        if (!contains(candidates, v)) continue;
        const std::size_t d = degree_within(v);
        if (best == n || d > best_deg) {
          best = v;
          best_deg = d;
        }
      }
      if (best == n) break;
      pick = best;
    }
    return clique;
  };

  // A single greedy pass can be captured by a high-degree hub vertex whose
  // neighborhood excludes the true consensus set (common when one scene
  // plane dominates), so restart from each of the highest-degree vertices
  // and keep the largest clique found. Deterministic: seeds are scanned in
  // a fixed order and only a strictly larger clique replaces the incumbent.
  std::vector<std::pair<std::size_t, std::size_t>> order(n);  // (-degree, idx)
  {
    std::vector<std::uint64_t> all(words, ~std::uint64_t{0});
    if (n % 64 != 0) all[words - 1] = (std::uint64_t{1} << (n % 64)) - 1;
    for (std::size_t v = 0; v < n; ++v) {
      std::size_t d = 0;
      for (std::size_t w = 0; w < words; ++w)
        d += static_cast<std::size_t>(
            __builtin_popcountll(adj[v * words + w] & all[w]));
      order[v] = {n - d, v};
    }
  }
  std::sort(order.begin(), order.end());
  const std::size_t starts = std::min<std::size_t>(n, 64);
  std::vector<std::size_t> clique;
  for (std::size_t k = 0; k < starts; ++k) {
    std::vector<std::size_t> c = run_from(order[k].second);
    if (c.size() > clique.size()) clique = std::move(c);
  }

  if (clique.size() < 3) throw DegenerateCorrespondencesError();
  std::sort(clique.begin(), clique.end());
  CorrespondenceSet out;
  for (std::size_t v : clique) {
    out.pairs.push_back(pairs.pairs[v]);
    out.distances.push_back(pairs.distances[v]);
  }
  return out;
}

namespace detail {

/// Weighted Kabsch: closed-form rotation and translation minimizing
/// sum w_i |R p_i + t - q_i|^2. Throws on collinear geometry.
inline RigidTransform weighted_procrustes(
    const std::vector<std::pair<int, int>>& pairs, const PointCloud& source,
    const PointCloud& target, const std::vector<double>& weights) {
  double wsum = 0.0;
  Vec3 ps = Vec3::Zero(), qs = Vec3::Zero();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    wsum += weights[i];
    ps += weights[i] * source.points[pairs[i].first];
    qs += weights[i] * target.points[pairs[i].second];
  }
  if (wsum <= 0.0) throw DegenerateGeometryError();
  ps /= wsum;
  qs /= wsum;

  Mat3 cross = Mat3::Zero();
  Mat3 scatter = Mat3::Zero();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const Vec3 a = source.points[pairs[i].first] - ps;
    const Vec3 b = target.points[pairs[i].second] - qs;
    cross += weights[i] * b * a.transpose();
    scatter += weights[i] * a * a.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> scatter_eig(scatter);
  // Collinear source geometry leaves the rotation unobservable.
  if (scatter_eig.eigenvalues()[1] <=
      1e-12 * std::max(scatter_eig.eigenvalues()[2], 1.0))
    throw DegenerateGeometryError();

  Eigen::JacobiSVD<Mat3> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 flip = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0)
    flip(2, 2) = -1.0;
  RigidTransform t;
  t.rotation = svd.matrixU() * flip * svd.matrixV().transpose();
  t.translation = qs - t.rotation * ps;
  return t;
}

}  // namespace detail

/// Robust pose from pruned correspondences: closed-form Procrustes start,
/// then graduated non-convexity with truncated least squares at threshold
/// noise_bound. Final inliers are the pairs with weight > 0.5.
inline CoarseResult solve_pose(const CorrespondenceSet& pairs,
                               const PointCloud& source,
                               const PointCloud& target, double noise_bound) {
  const std::size_t n = pairs.size();
  if (n < 3) throw DegenerateCorrespondencesError();

  std::vector<double> weights(n, 1.0);
  RigidTransform pose =
      detail::weighted_procrustes(pairs.pairs, source, target, weights);

  const double c2 = noise_bound * noise_bound;
  auto residuals2 = [&](const RigidTransform& t) {
    std::vector<double> r2(n);
    for (std::size_t i = 0; i < n; ++i)
      r2[i] = (t.apply(source.points[pairs.pairs[i].first]) -
               target.points[pairs.pairs[i].second])
                  .squaredNorm();
    return r2;
  };

  std::vector<double> r2 = residuals2(pose);
  const double r2max = *std::max_element(r2.begin(), r2.end());
  double mu = c2 / std::max(2.0 * r2max - c2, 1e-12);

  bool converged = false;
  for (int iter = 0; iter < 100; ++iter) {
    // GNC-TLS weight update.
    double max_change = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double w;
      if (r2[i] <= (mu / (mu + 1.0)) * c2)
        w = 1.0;
      else if (r2[i] >= ((mu + 1.0) / mu) * c2)
        w = 0.0;
      else
        w = noise_bound * std::sqrt(mu * (mu + 1.0) / r2[i]) - mu;
      max_change = std::max(max_change, std::abs(w - weights[i]));
      weights[i] = w;
    }
    if (iter > 0 && max_change < 1e-6) {
      converged = true;
      break;
    }
    try {
      pose = detail::weighted_procrustes(pairs.pairs, source, target, weights);
    } catch (const DegenerateGeometryError&) {
      break;  // weights collapsed; keep best-so-far
    }
    r2 = residuals2(pose);
    mu *= 1.4;
  }

  CoarseResult result;
  result.transform = pose;
  result.converged = converged;
  for (std::size_t i = 0; i < n; ++i) {
    if (weights[i] > 0.5) {
      result.inlier_pairs.pairs.push_back(pairs.pairs[i]);
      result.inlier_pairs.distances.push_back(pairs.distances[i]);
    }
  }
  result.inlier_count = result.inlier_pairs.size();
  return result;
}

/// Initial-guess-free global registration: voxelize, estimate normals,
/// compute FPFH, match mutually, prune by length consistency, solve
/// robustly. Any stage failure degrades to an identity seed with
/// success == false; the fine stage's fitness threshold is the authoritative
/// rejection gate.
inline CoarseResult coarse_align(const PointCloud& source,
                                 const PointCloud& target,
                                 const CoarseParams& params = {}) {
  CoarseResult failure;
  failure.success = false;
  failure.inlier_count = 0;
  try {
    PointCloud src = voxel_downsample(source, params.voxel_size);
    PointCloud tgt = voxel_downsample(target, params.voxel_size);
    const std::size_t k_src = std::min(params.normal_k, src.size());
    const std::size_t k_tgt = std::min(params.normal_k, tgt.size());
    src = estimate_normals(src, k_src);
    tgt = estimate_normals(tgt, k_tgt);
    const double radius = params.fpfh_radius_factor * params.voxel_size;
    const FeatureCloud src_features = compute_fpfh(src, radius);
    const FeatureCloud tgt_features = compute_fpfh(tgt, radius);
    CorrespondenceSet matches = match_features(src_features, tgt_features);
    matches = prune_correspondences(matches, src, tgt, params.noise_bound);
    return solve_pose(matches, src, tgt, params.noise_bound);
  } catch (const CalibrationError& e) {
    failure.failure_reason = e.what();
    return failure;
  }
}

}  // namespace mlcal
