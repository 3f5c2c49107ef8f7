#include "mlcal/evaluate.hpp"

#include "mlcal/rng.hpp"
#include "test_util.hpp"

#include <Eigen/Geometry>
#include <gtest/gtest.h>

using namespace mlcal;

namespace {

TEST(PoseError, IdenticalPosesGiveZero) {
  SplitMix64 rng(60);
  const RigidTransform t = testutil::random_transform(rng);
  const PoseError e = pose_error(t, t);
  EXPECT_LT(e.translation_error.norm(), 1e-15);
  EXPECT_LT(e.rotation_error.norm(), 1e-9);
  EXPECT_LT(e.total_angle, 1e-7);
}

TEST(PoseError, KnownOffsets) {
  const RigidTransform truth = RigidTransform::from_rpy(
      0.1, -0.2, 0.3, Vec3(1, 2, 3));
  RigidTransform estimate = truth;
  estimate.translation += Vec3(0.01, -0.02, 0.03);
  const PoseError e = pose_error(estimate, truth);
  EXPECT_NEAR(e.translation_error.x(), 0.01, 1e-15);
  EXPECT_NEAR(e.translation_error.y(), -0.02, 1e-15);
  EXPECT_NEAR(e.translation_error.z(), 0.03, 1e-15);
  EXPECT_LT(e.total_angle, 1e-7);

  // Pure yaw offset applied in the truth frame.
  const double yaw = 0.05;
  RigidTransform rotated = truth;
  rotated.rotation = truth.rotation *
                     RigidTransform::from_rpy(0, 0, yaw, Vec3::Zero()).rotation;
  const PoseError r = pose_error(rotated, truth);
  EXPECT_NEAR(r.total_angle, yaw, 1e-12);
  EXPECT_NEAR(r.rotation_error.z(), yaw, 1e-12);
  EXPECT_NEAR(r.rotation_error.x(), 0.0, 1e-12);
  EXPECT_NEAR(r.rotation_error.y(), 0.0, 1e-12);
}

TEST(PoseError, TotalAngleMatchesQuaternionOracle) {
  SplitMix64 rng(61);
  for (int trial = 0; trial < 1000; ++trial) {
    const RigidTransform a = testutil::random_transform(rng);
    const RigidTransform b = testutil::random_transform(rng);
    const PoseError e = pose_error(a, b);
    const Eigen::Quaterniond qa(a.rotation), qb(b.rotation);
    EXPECT_NEAR(e.total_angle, qa.angularDistance(qb), 1e-9);
  }
}

TEST(PoseError, RelativeEulerReassemblesRelativeRotation) {
  SplitMix64 rng(62);
  for (int trial = 0; trial < 200; ++trial) {
    const RigidTransform truth = testutil::random_transform(rng);
    const RigidTransform estimate = testutil::random_transform(rng);
    const PoseError e = pose_error(estimate, truth);
    const Mat3 rebuilt =
        RigidTransform::from_rpy(e.rotation_error.x(), e.rotation_error.y(),
                                 e.rotation_error.z(), Vec3::Zero())
            .rotation;
    EXPECT_LT((rebuilt - truth.rotation.transpose() * estimate.rotation).norm(),
              1e-9);
  }
}

TEST(PoseError, AbsoluteEulerDeltaMode) {
  const RigidTransform truth =
      RigidTransform::from_rpy(0.1, 0.2, 0.3, Vec3::Zero());
  const RigidTransform estimate =
      RigidTransform::from_rpy(0.15, 0.18, 0.33, Vec3::Zero());
  const PoseError e =
      pose_error(estimate, truth, RotationErrorMode::AbsoluteEulerDelta);
  EXPECT_NEAR(e.rotation_error.x(), 0.05, 1e-12);
  EXPECT_NEAR(e.rotation_error.y(), -0.02, 1e-12);
  EXPECT_NEAR(e.rotation_error.z(), 0.03, 1e-12);
}

TEST(AggregateRmse, MatchesTwoPassOracle) {
  SplitMix64 rng(63);
  std::vector<PoseError> errors;
  for (int i = 0; i < 50; ++i)
    errors.push_back(pose_error(testutil::random_transform(rng),
                                testutil::random_transform(rng)));
  const ErrorReport report = aggregate_rmse(errors);

  // Independent two-pass computation per axis.
  for (int axis = 0; axis < 3; ++axis) {
    double sum_t = 0.0, sum_r = 0.0;
    for (const auto& e : errors) {
      sum_t += e.translation_error[axis] * e.translation_error[axis];
      sum_r += e.rotation_error[axis] * e.rotation_error[axis];
    }
    EXPECT_NEAR(report.translation_rmse[axis],
                std::sqrt(sum_t / errors.size()), 1e-12);
    EXPECT_NEAR(report.rotation_rmse[axis], std::sqrt(sum_r / errors.size()),
                1e-12);
  }
  double sum_a = 0.0;
  for (const auto& e : errors) sum_a += e.total_angle * e.total_angle;
  EXPECT_NEAR(report.total_angle_rmse, std::sqrt(sum_a / errors.size()),
              1e-12);
}

TEST(AggregateRmse, SingleEntryEqualsAbsoluteError) {
  PoseError e;
  e.translation_error = Vec3(0.1, -0.2, 0.3);
  e.rotation_error = Vec3(0.01, 0.02, -0.03);
  e.total_angle = 0.04;
  const ErrorReport report = aggregate_rmse(std::vector<PoseError>{e});
  EXPECT_LT((report.translation_rmse - e.translation_error.cwiseAbs()).norm(),
            1e-15);
  EXPECT_LT((report.rotation_rmse - e.rotation_error.cwiseAbs()).norm(),
            1e-15);
  EXPECT_DOUBLE_EQ(report.total_angle_rmse, 0.04);
}

TEST(AggregateRmse, EmptyInputThrows) {
  EXPECT_THROW(aggregate_rmse(std::vector<PoseError>{}), EmptyInputError);
}

}  // namespace
