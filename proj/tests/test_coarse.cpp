#include "mlcal/coarse.hpp"

#include "mlcal/synth.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <set>

using namespace mlcal;

namespace {

FeatureCloud features_of(const PointCloud& cloud, double voxel = 0.35,
                         double radius_factor = 5.0) {
  PointCloud down = voxel_downsample(cloud, voxel);
  down = estimate_normals(down, std::min<std::size_t>(20, down.size()));
  return compute_fpfh(down, radius_factor * voxel);
}

PointCloud structured_cloud(std::uint64_t seed) {
  SceneSpec scene;
  scene.ground_half_x = 20.0;
  scene.ground_half_y = 20.0;
  add_box(scene, 6.0, 1.0, 1.0, 0.8, 1.5, 0.3);
  add_box(scene, 9.0, -3.0, 1.4, 1.0, 2.0, 1.2);
  add_box(scene, 11.0, 4.0, 0.8, 1.2, 1.8, 2.1);
  add_box(scene, 5.0, -5.0, 1.2, 1.2, 1.2, 0.8);
  add_box(scene, 14.0, 0.5, 0.9, 1.5, 2.4, 1.7);
  SensorSpec sensor;
  sensor.id = "s";
  sensor.hfov_deg = 100.0;
  sensor.vfov_deg = 45.0;
  sensor.h_rays = 160;
  sensor.v_rays = 50;
  sensor.min_range = 1.0;
  sensor.max_range = 30.0;
  sensor.noise_sigma = 0.0;
  sensor.seed = seed;
  sensor.pose =
      RigidTransform::from_rpy(0.0, 12.0 * M_PI / 180.0, 0.0, Vec3(0, 0, 1.8));
  return generate_scan(scene, sensor).cloud;
}

TEST(MatchFeatures, SelfMatchIsIdentityPairs) {
  const FeatureCloud fc = features_of(structured_cloud(1));
  const CorrespondenceSet matches = match_features(fc, fc);
  std::size_t valid = 0;
  for (const auto& d : fc.descriptors)
    if (d.valid) ++valid;
  EXPECT_EQ(matches.size(), valid);
  for (std::size_t i = 0; i < matches.size(); ++i) {
    EXPECT_EQ(matches.pairs[i].first, matches.pairs[i].second);
    EXPECT_EQ(matches.distances[i], 0.0);
  }
}

TEST(MatchFeatures, TransformedCopyMatchesOwnImage) {
  SplitMix64 rng(32);
  const PointCloud target = structured_cloud(2);
  const RigidTransform t = testutil::random_transform(rng, 1.0);
  // Build source features from the same voxelized geometry, rigidly moved,
  // so point i corresponds to point i.
  PointCloud tgt_down = voxel_downsample(target, 0.35);
  tgt_down = estimate_normals(tgt_down, 20);
  const PointCloud src_down = apply_transform(tgt_down, t);
  const FeatureCloud tf = compute_fpfh(tgt_down, 1.75);
  const FeatureCloud sf = compute_fpfh(src_down, 1.75);

  const CorrespondenceSet matches = match_features(sf, tf);
  ASSERT_GT(matches.size(), 10u);
  std::size_t correct = 0;
  for (const auto& [si, ti] : matches.pairs)
    if (si == ti) ++correct;
  EXPECT_GE(static_cast<double>(correct) / matches.size(), 0.95);
}

TEST(MatchFeatures, NoValidDescriptorsThrows) {
  // Two isolated points: no neighbors within radius, all descriptors invalid.
  PointCloud cloud;
  cloud.points = {{0, 0, 0}, {100, 0, 0}, {0, 100, 0}};
  cloud.normals = {{0, 0, 1}, {0, 0, 1}, {0, 0, 1}};
  const FeatureCloud fc = compute_fpfh(cloud, 0.5);
  EXPECT_THROW(match_features(fc, fc), NoFeaturesError);
}

TEST(PruneCorrespondences, NoiselessRigidCopyKeepsAll) {
  SplitMix64 rng(33);
  const PointCloud target = testutil::random_cloud(30, rng);
  const RigidTransform t = testutil::random_transform(rng);
  const PointCloud source = apply_transform(target, t);
  CorrespondenceSet pairs;
  for (int i = 0; i < 30; ++i) {
    pairs.pairs.emplace_back(i, i);
    pairs.distances.push_back(0.0);
  }
  const CorrespondenceSet kept =
      prune_correspondences(pairs, source, target, 0.05);
  EXPECT_EQ(kept.size(), pairs.size());
}

TEST(PruneCorrespondences, OutliersRemovedExactly) {
  SplitMix64 rng(34);
  const double noise_bound = 0.05;
  const PointCloud target = testutil::random_cloud(60, rng, 20.0);
  const RigidTransform t = testutil::random_transform(rng);
  PointCloud source = apply_transform(target, t);

  CorrespondenceSet pairs;
  for (int i = 0; i < 10; ++i) {  // consistent pairs
    pairs.pairs.emplace_back(i, i);
    pairs.distances.push_back(0.0);
  }
  for (int i = 10; i < 15; ++i) {  // wild outliers: wrong targets
    pairs.pairs.emplace_back(i, i + 30);
    pairs.distances.push_back(0.0);
  }

  const CorrespondenceSet kept =
      prune_correspondences(pairs, source, target, noise_bound);

  // Exhaustive oracle over all 2^15 subsets: largest mutually consistent set.
  const std::size_t n = pairs.size();
  auto consistent = [&](std::size_t a, std::size_t b) {
    const double ds = (source.points[pairs.pairs[a].first] -
                       source.points[pairs.pairs[b].first])
                          .norm();
    const double dt = (target.points[pairs.pairs[a].second] -
                       target.points[pairs.pairs[b].second])
                          .norm();
    return std::abs(ds - dt) <= 2 * noise_bound;
  };
  std::size_t best_mask = 0;
  int best_count = 0;
  for (std::size_t mask = 0; mask < (1u << n); ++mask) {
    const int count = __builtin_popcount(mask);
    if (count <= best_count) continue;
    bool ok = true;
    for (std::size_t a = 0; a < n && ok; ++a)
      for (std::size_t b = a + 1; b < n && ok; ++b)
        if ((mask >> a & 1) && (mask >> b & 1) && !consistent(a, b))
          ok = false;
    if (ok) {
      best_count = count;
      best_mask = mask;
    }
  }
  ASSERT_EQ(best_count, 10);
  std::set<std::pair<int, int>> expected;
  for (std::size_t i = 0; i < n; ++i)
    if (best_mask >> i & 1) expected.insert(pairs.pairs[i]);
  std::set<std::pair<int, int>> got(kept.pairs.begin(), kept.pairs.end());
  EXPECT_EQ(got, expected);
}

TEST(PruneCorrespondences, MinimumSizeRule) {
  PointCloud target;
  target.points = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {5, 5, 5}};
  PointCloud source = target;
  CorrespondenceSet pairs;
  pairs.pairs = {{0, 0}, {1, 1}, {2, 3}};  // third is inconsistent
  pairs.distances = {0, 0, 0};
  EXPECT_THROW(prune_correspondences(pairs, source, target, 0.01),
               DegenerateCorrespondencesError);

  CorrespondenceSet two;
  two.pairs = {{0, 0}, {1, 1}};
  two.distances = {0, 0};
  EXPECT_THROW(prune_correspondences(two, source, target, 0.01),
               DegenerateCorrespondencesError);
}

TEST(SolvePose, IdentityOnExactPairs) {
  SplitMix64 rng(35);
  const PointCloud cloud = testutil::random_cloud(40, rng);
  CorrespondenceSet pairs;
  for (int i = 0; i < 40; ++i) {
    pairs.pairs.emplace_back(i, i);
    pairs.distances.push_back(0.0);
  }
  const CoarseResult result = solve_pose(pairs, cloud, cloud, 0.1);
  EXPECT_LT((result.transform.rotation - Mat3::Identity()).norm(), 1e-9);
  EXPECT_LT(result.transform.translation.norm(), 1e-9);
}

TEST(SolvePose, RecoversKnownTransformNoiseless) {
  SplitMix64 rng(36);
  const PointCloud target = testutil::random_cloud(60, rng, 15.0);
  const RigidTransform truth = RigidTransform::from_rpy(
      0.0, 0.0, 30.0 * M_PI / 180.0, Vec3(2.0, 1.0, 0.5));
  // source -> target is truth: source = truth^-1(target).
  const PointCloud source = apply_transform(target, truth.inverse());
  CorrespondenceSet pairs;
  for (int i = 0; i < 60; ++i) {
    pairs.pairs.emplace_back(i, i);
    pairs.distances.push_back(0.0);
  }
  const CoarseResult result = solve_pose(pairs, source, target, 0.1);
  EXPECT_LT((result.transform.rotation - truth.rotation).norm(), 1e-6);
  EXPECT_LT((result.transform.translation - truth.translation).norm(), 1e-6);
}

TEST(SolvePose, RobustToThirtyPercentOutliers) {
  SplitMix64 rng(37);
  const PointCloud target = testutil::random_cloud(100, rng, 15.0);
  const RigidTransform truth = testutil::random_transform(rng);
  const PointCloud source = apply_transform(target, truth.inverse());
  CorrespondenceSet pairs;
  for (int i = 0; i < 70; ++i) {
    pairs.pairs.emplace_back(i, i);
    pairs.distances.push_back(0.0);
  }
  for (int i = 70; i < 100; ++i) {  // outliers: random wrong target
    pairs.pairs.emplace_back(i, static_cast<int>(rng.next_index(70)));
    pairs.distances.push_back(0.0);
  }
  const CoarseResult result = solve_pose(pairs, source, target, 0.05);
  EXPECT_LT(testutil::rotation_angle(result.transform.rotation, truth.rotation),
            0.5 * M_PI / 180.0);
  EXPECT_LT((result.transform.translation - truth.translation).norm(), 0.05);
  EXPECT_TRUE(result.transform.is_valid(1e-9));
}

TEST(SolvePose, CollinearGeometryThrows) {
  PointCloud target;
  for (int i = 0; i < 10; ++i) target.points.emplace_back(i * 1.0, 0.0, 0.0);
  CorrespondenceSet pairs;
  for (int i = 0; i < 10; ++i) {
    pairs.pairs.emplace_back(i, i);
    pairs.distances.push_back(0.0);
  }
  EXPECT_THROW(solve_pose(pairs, target, target, 0.1),
               DegenerateGeometryError);
}

TEST(CoarseAlign, SelfRegistrationIsIdentity) {
  const PointCloud cloud = structured_cloud(3);
  const CoarseResult result = coarse_align(cloud, cloud);
  ASSERT_TRUE(result.success);
  EXPECT_LT((result.transform.rotation - Mat3::Identity()).norm(), 1e-6);
  EXPECT_LT(result.transform.translation.norm(), 1e-6);
}

TEST(CoarseAlign, DeterministicResult) {
  const PointCloud source = structured_cloud(4);
  const PointCloud target = structured_cloud(5);
  const CoarseResult a = coarse_align(source, target);
  const CoarseResult b = coarse_align(source, target);
  EXPECT_EQ(a.success, b.success);
  EXPECT_EQ(a.inlier_count, b.inlier_count);
  EXPECT_EQ((a.transform.matrix() - b.transform.matrix()).norm(), 0.0);
}

TEST(CoarseAlign, DisjointGeometryFailsToIdentity) {
  SplitMix64 rng(38);
  // Two clusters 500 m apart with different shapes.
  PointCloud a = testutil::random_cloud(500, rng, 5.0);
  PointCloud b;
  for (int i = 0; i < 500; ++i) {
    const double ang = rng.uniform(0, 2 * M_PI);
    const double z = rng.uniform(-1, 1);
    const double r = std::sqrt(1 - z * z);
    b.points.emplace_back(500 + 3 * r * std::cos(ang), 3 * r * std::sin(ang),
                          3 * z);
  }
  const CoarseResult result = coarse_align(a, b);
  if (!result.success) {
    EXPECT_EQ(result.inlier_count, 0u);
    EXPECT_LT((result.transform.matrix() - Mat4::Identity()).norm(), 1e-12);
    EXPECT_FALSE(result.failure_reason.empty());
  }
  // If matching technically succeeds the caller still gates on fitness.
}

}  // namespace
