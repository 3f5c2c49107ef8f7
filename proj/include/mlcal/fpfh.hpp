#pragma once

#include "mlcal/kdtree.hpp"
#include "mlcal/types.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace mlcal {

inline constexpr int kFpfhBinsPerFeature = 11;
inline constexpr int kFpfhDim = 3 * kFpfhBinsPerFeature;

/// 33-bin FPFH descriptor (3 Darboux angles x 11 bins). An isolated point
/// (no neighbors inside the radius) gets the all-zero descriptor and
/// valid == false.
struct FpfhDescriptor {
  std::array<double, kFpfhDim> bins{};
  bool valid = false;
};

/// Voxelized cloud together with its per-point descriptors.
struct FeatureCloud {
  PointCloud cloud;
  std::vector<FpfhDescriptor> descriptors;
  double radius = 0.0;
};

namespace detail {

/// Darboux-frame angle triple for an ordered point pair. The source of the
/// pair is the point whose normal makes the smaller angle with the
/// connecting line. Returns (alpha, phi, theta) with alpha and phi as
/// cosines in [-1, 1] and theta in [-pi, pi].
inline std::array<double, 3> pair_features(const Vec3& p1, const Vec3& n1,
                                           const Vec3& p2, const Vec3& n2) {
  Vec3 ps = p1, ns = n1, pt = p2, nt = n2;
  Vec3 d = pt - ps;
  const double dist = d.norm();
  if (dist < 1e-12) return {0.0, 0.0, 0.0};
  d /= dist;
  if (std::abs(n1.dot(d)) < std::abs(n2.dot(d))) {
    std::swap(ps, pt);
    std::swap(ns, nt);
    d = -d;
  }
  const Vec3& u = ns;
  Vec3 v = d.cross(u);
  const double vnorm = v.norm();
  if (vnorm < 1e-12) {
    // d parallel to the source normal; the frame is undefined, pick a
    // deterministic in-plane axis.
    v = u.unitOrthogonal();
  } else {
    v /= vnorm;
  }
  const Vec3 w = u.cross(v);
  const double alpha = std::clamp(v.dot(nt), -1.0, 1.0);
  const double phi = std::clamp(u.dot(d), -1.0, 1.0);
  const double theta = std::atan2(w.dot(nt), u.dot(nt));
  return {alpha, phi, theta};
}

/// Linearly splits a unit vote between the two bins nearest the value so a
/// feature sitting on a bin edge does not flip wholesale under resampling
/// noise.
inline void fpfh_vote(double* hist, double value, double lo, double hi) {
  const double x =
      (value - lo) / (hi - lo) * kFpfhBinsPerFeature - 0.5;  // bin-center units
  const double fl = std::floor(x);
  if (fl < 0.0) {
    hist[0] += 1.0;
    return;
  }
  if (fl >= kFpfhBinsPerFeature - 1) {
    hist[kFpfhBinsPerFeature - 1] += 1.0;
    return;
  }
  const double frac = x - fl;
  const int b0 = static_cast<int>(fl);
  hist[b0] += 1.0 - frac;
  hist[b0 + 1] += frac;
}

inline void accumulate_spfh(std::array<double, kFpfhDim>& hist,
                            const std::array<double, 3>& f) {
  constexpr double pi = 3.14159265358979323846;
  fpfh_vote(hist.data(), f[0], -1.0, 1.0);
  fpfh_vote(hist.data() + kFpfhBinsPerFeature, f[1], -1.0, 1.0);
  fpfh_vote(hist.data() + 2 * kFpfhBinsPerFeature, f[2], -pi, pi);
}

/// Normalizes each 11-bin sub-histogram to sum 100.
inline void normalize_spfh(std::array<double, kFpfhDim>& hist) {
  for (int f = 0; f < 3; ++f) {
    double sum = 0.0;
    for (int b = 0; b < kFpfhBinsPerFeature; ++b)
      sum += hist[f * kFpfhBinsPerFeature + b];
    if (sum > 0.0)
      for (int b = 0; b < kFpfhBinsPerFeature; ++b)
        hist[f * kFpfhBinsPerFeature + b] *= 100.0 / sum;
  }
}

}  // namespace detail

/// FPFH over radius neighborhoods: per-point SPFH histograms plus the
/// distance-weighted neighbor average, FPFH(p) = SPFH(p)
/// + (1/|N|) * sum_q SPFH(q) / |p - q|.
inline FeatureCloud compute_fpfh(const PointCloud& cloud, double radius) {
  if (!cloud.has_normals()) throw MissingNormalsError();
  if (radius <= 0.0) throw InvalidParameterError("fpfh radius must be positive");

  const std::size_t n = cloud.size();
  KdTree index(cloud.points);

  std::vector<std::vector<KdTree::Neighbor>> neighborhoods(n);
  std::vector<std::array<double, kFpfhDim>> spfh(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto nbrs = index.radius(cloud.points[i], radius);
    // Drop self-matches.
    std::erase_if(nbrs, [i](const KdTree::Neighbor& m) { return m.index == i; });
    spfh[i].fill(0.0);
    for (const auto& m : nbrs)
      detail::accumulate_spfh(
          spfh[i], detail::pair_features(cloud.points[i], cloud.normals[i],
                                         cloud.points[m.index],
                                         cloud.normals[m.index]));
    detail::normalize_spfh(spfh[i]);
    neighborhoods[i] = std::move(nbrs);
  }

  FeatureCloud out;
  out.cloud = cloud;
  out.radius = radius;
  out.descriptors.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& nbrs = neighborhoods[i];
    FpfhDescriptor& desc = out.descriptors[i];
    if (nbrs.empty()) continue;  // all-zero, invalid
    desc.valid = true;
    desc.bins = spfh[i];
    const double inv_n = 1.0 / static_cast<double>(nbrs.size());
    for (const auto& m : nbrs) {
      const double w = inv_n / std::max(m.distance, 1e-12);
      for (int b = 0; b < kFpfhDim; ++b) desc.bins[b] += w * spfh[m.index][b];
    }
    // Renormalize so descriptor distance compares histogram shape, not the
    // sampling-density-dependent scale of the 1/distance weighting.
    detail::normalize_spfh(desc.bins);
  }
  return out;
}

}  // namespace mlcal
