#include "graspflow/geometry.hpp"

#include <cmath>
#include <stdexcept>

#include <gtest/gtest.h>

#include "graspflow/rng.hpp"
#include "oracles.hpp"

namespace graspflow {
namespace {

TEST(CanonicalAngle, ReducesModuloPi) {
  EXPECT_DOUBLE_EQ(canonical_angle(0.0), 0.0);
  EXPECT_DOUBLE_EQ(canonical_angle(0.3), 0.3);
  EXPECT_DOUBLE_EQ(canonical_angle(-M_PI / 2), -M_PI / 2);
  // the upper endpoint wraps to the lower one
  EXPECT_DOUBLE_EQ(canonical_angle(M_PI / 2), -M_PI / 2);
  EXPECT_NEAR(canonical_angle(M_PI), 0.0, 1e-15);
  EXPECT_NEAR(canonical_angle(-M_PI), 0.0, 1e-15);
  EXPECT_NEAR(canonical_angle(M_PI / 2 + 0.1), -M_PI / 2 + 0.1, 1e-15);
  EXPECT_NEAR(canonical_angle(7.0), 7.0 - 2 * M_PI, 1e-15);
  EXPECT_NEAR(canonical_angle(-7.0), -7.0 + 2 * M_PI, 1e-15);
}

TEST(GraspPose, ConstructorCanonicalizesTheta) {
  GraspPose g(1.0, 2.0, 3.0, 4.0, M_PI);
  EXPECT_NEAR(g.theta, 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(GraspPose(0, 0, 1, 1, M_PI / 2).theta, -M_PI / 2);
}

TEST(GraspPose, ConstructorRejectsBadFields) {
  EXPECT_THROW(GraspPose(0, 0, 0.0, 1, 0), std::invalid_argument);
  EXPECT_THROW(GraspPose(0, 0, 1, -1, 0), std::invalid_argument);
  EXPECT_THROW(GraspPose(std::nan(""), 0, 1, 1, 0), std::invalid_argument);
  EXPECT_THROW(GraspPose(0, 0, 1, 1, std::numeric_limits<double>::infinity()),
               std::invalid_argument);
}

TEST(EncodePose, WorkedExample) {
  GraspPose g(25.0, 75.0, 20.0, 10.0, M_PI / 4);
  PoseVec v = encode_pose(g, 100.0);
  EXPECT_DOUBLE_EQ(v(0), -0.5);
  EXPECT_DOUBLE_EQ(v(1), 0.5);
  EXPECT_DOUBLE_EQ(v(2), -0.6);
  EXPECT_DOUBLE_EQ(v(3), -0.8);
  EXPECT_DOUBLE_EQ(v(4), 0.5);
}

TEST(EncodePose, RejectsNonPositiveExtent) {
  GraspPose g(1, 1, 1, 1, 0);
  EXPECT_THROW(encode_pose(g, 0.0), std::invalid_argument);
  EXPECT_THROW(encode_pose(g, -5.0), std::invalid_argument);
}

TEST(DecodePose, ClampsDegenerateExtents) {
  PoseVec v;
  v << 0.0, 0.0, -1.2, -1.0, 0.0;  // decoded w would be -10, h would be 0
  GraspPose g = decode_pose(v, 100.0);
  EXPECT_DOUBLE_EQ(g.w, 0.1);  // 1e-3 * extent
  EXPECT_DOUBLE_EQ(g.h, 0.1);
}

TEST(DecodePose, IsTotalOnWildInputs) {
  PoseVec v;
  v << 40.0, -40.0, 17.0, -17.0, 9.0;  // far outside [-1,1]^5
  GraspPose g = decode_pose(v, 100.0);
  EXPECT_TRUE(std::isfinite(g.cx));
  EXPECT_GT(g.w, 0.0);
  EXPECT_GT(g.h, 0.0);
  EXPECT_GE(g.theta, -M_PI / 2);
  EXPECT_LT(g.theta, M_PI / 2);
}

TEST(EncodeDecode, RoundTripsRandomPoses) {
  RandomStream rng(7);
  for (int i = 0; i < 200; ++i) {
    double extent = 50.0 + 100.0 * rng.uniform();
    GraspPose g = oracles::random_pose(rng, extent);
    GraspPose back = decode_pose(encode_pose(g, extent), extent);
    EXPECT_NEAR(back.cx, g.cx, 1e-10);
    EXPECT_NEAR(back.cy, g.cy, 1e-10);
    EXPECT_NEAR(back.w, g.w, 1e-10);
    EXPECT_NEAR(back.h, g.h, 1e-10);
    EXPECT_NEAR(back.theta, g.theta, 1e-10);
  }
}

TEST(RectCorners, CounterClockwiseWithCorrectArea) {
  GraspPose g(3.0, -2.0, 4.0, 2.0, 0.7);
  auto c = rect_corners(g);
  double shoelace = 0.0;
  for (int i = 0; i < 4; ++i) {
    const auto& p = c[i];
    const auto& q = c[(i + 1) % 4];
    shoelace += p.x() * q.y() - q.x() * p.y();
  }
  EXPECT_NEAR(0.5 * shoelace, g.w * g.h, 1e-12);  // positive = CCW
  Eigen::Vector2d center = (c[0] + c[1] + c[2] + c[3]) / 4.0;
  EXPECT_NEAR(center.x(), g.cx, 1e-12);
  EXPECT_NEAR(center.y(), g.cy, 1e-12);
}

TEST(RectIou, AxisAlignedOverlapIsOneThird) {
  GraspPose a(0.0, 0.0, 2.0, 2.0, 0.0);
  GraspPose b(1.0, 0.0, 2.0, 2.0, 0.0);
  EXPECT_NEAR(rect_iou(a, b), 1.0 / 3.0, 1e-12);
}

TEST(RectIou, IdenticalRectanglesScoreOne) {
  // clipping a rotated rectangle against itself goes through trig and
  // shoelace arithmetic, so exact bit equality is not on the table; a few ulp
  // is
  RandomStream rng(3);
  for (int i = 0; i < 50; ++i) {
    GraspPose g = oracles::random_pose(rng, 100.0);
    EXPECT_NEAR(rect_iou(g, g), 1.0, 1e-12);
  }
}

TEST(RectIou, DisjointRectanglesScoreZero) {
  GraspPose a(0.0, 0.0, 2.0, 2.0, 0.4);
  GraspPose b(10.0, 10.0, 2.0, 2.0, -0.4);
  EXPECT_DOUBLE_EQ(rect_iou(a, b), 0.0);
}

TEST(RectIou, ContainmentScoresAreaRatio) {
  GraspPose outer(0.0, 0.0, 8.0, 6.0, 0.0);
  GraspPose inner(0.5, -0.5, 2.0, 1.0, 0.0);
  EXPECT_NEAR(rect_iou(outer, inner), 2.0 / 48.0, 1e-12);
}

TEST(RectIou, SymmetricAndRigidMotionInvariant) {
  RandomStream rng(11);
  for (int i = 0; i < 50; ++i) {
    GraspPose a = oracles::random_pose(rng, 100.0);
    GraspPose b = oracles::random_pose(rng, 100.0);
    double iou = rect_iou(a, b);
    EXPECT_NEAR(rect_iou(b, a), iou, 1e-12);

    // translate and rotate both rects by the same rigid motion
    double phi = -1.0 + 2.0 * rng.uniform();
    double tx = 30.0 * rng.uniform(), ty = 30.0 * rng.uniform();
    double c = std::cos(phi), s = std::sin(phi);
    auto moved = [&](const GraspPose& g) {
      return GraspPose(c * g.cx - s * g.cy + tx, s * g.cx + c * g.cy + ty, g.w, g.h,
                       g.theta + phi);
    };
    EXPECT_NEAR(rect_iou(moved(a), moved(b)), iou, 1e-9);
  }
}

TEST(RectIou, DegenerateInputScoresZeroAndSetsFlag) {
  GraspPose ok(0.0, 0.0, 2.0, 2.0, 0.0);
  GraspPose tiny = ok;
  tiny.w = 0.0;  // bypass the constructor to model a collapsed prediction
  bool degenerate = false;
  EXPECT_DOUBLE_EQ(rect_iou(tiny, ok, &degenerate), 0.0);
  EXPECT_TRUE(degenerate);
  degenerate = true;
  rect_iou(ok, ok, &degenerate);
  EXPECT_FALSE(degenerate);
}

TEST(RectIou, MatchesRasterOracleOnRandomPairs) {
  RandomStream rng(19);
  for (int i = 0; i < 100; ++i) {
    GraspPose a = oracles::random_pose(rng, 10.0);
    GraspPose b = oracles::random_pose(rng, 10.0);
    // nudge half the pairs together so intersections are common
    if (i % 2 == 0) {
      b.cx = a.cx + 0.5 * (b.cx - a.cx);
      b.cy = a.cy + 0.5 * (b.cy - a.cy);
    }
    double poly = rect_iou(a, b);
    double raster = oracles::raster_iou(a, b, 500);
    EXPECT_NEAR(poly, raster, 0.02) << "pair " << i;
  }
}

TEST(AngleOffset, HandlesPiPeriodicWrap) {
  GraspPose a(0, 0, 1, 1, M_PI / 2 - 0.01);
  GraspPose b(0, 0, 1, 1, -M_PI / 2 + 0.01);
  EXPECT_NEAR(angle_offset(a, b), 0.02, 1e-12);
}

TEST(AngleOffset, BasicProperties) {
  GraspPose a(0, 0, 1, 1, 0.3);
  GraspPose b(0, 0, 1, 1, -0.2);
  EXPECT_NEAR(angle_offset(a, b), 0.5, 1e-12);
  EXPECT_DOUBLE_EQ(angle_offset(a, b), angle_offset(b, a));
  EXPECT_DOUBLE_EQ(angle_offset(a, a), 0.0);
  // offsets never exceed pi/2
  GraspPose c(0, 0, 1, 1, -1.5);
  GraspPose d(0, 0, 1, 1, 1.5);
  EXPECT_LE(angle_offset(c, d), M_PI / 2);
}

TEST(IsSuccess, RequiresBothThresholds) {
  std::vector<GraspPose> gts = {GraspPose(0.0, 0.0, 2.0, 2.0, 0.0)};

  // strong overlap, aligned: success
  EXPECT_TRUE(is_success(GraspPose(0.1, 0.0, 2.0, 2.0, 0.0), gts));

  // IoU analytically 0.26 > 0.25 with zero angle offset: success
  double d26 = 2.0 * (1.0 - 0.26) / (1.0 + 0.26);
  EXPECT_TRUE(is_success(GraspPose(d26, 0.0, 2.0, 2.0, 0.0), gts));

  // IoU analytically 0.24 < 0.25: failure despite perfect angle
  double d24 = 2.0 * (1.0 - 0.24) / (1.0 + 0.24);
  EXPECT_FALSE(is_success(GraspPose(d24, 0.0, 2.0, 2.0, 0.0), gts));

  // perfect overlap position but angle exactly at the threshold: failure
  // (the comparison is strict). Field assignment keeps the angle bit-exact.
  GraspPose at_threshold(0.0, 0.0, 2.0, 2.0, 0.0);
  at_threshold.theta = M_PI / 6;
  EXPECT_FALSE(is_success(at_threshold, gts));
  EXPECT_TRUE(is_success(GraspPose(0.0, 0.0, 2.0, 2.0, M_PI / 6 - 1e-6), gts));

  // far away: failure
  EXPECT_FALSE(is_success(GraspPose(50.0, 50.0, 2.0, 2.0, 0.0), gts));
}

TEST(IsSuccess, AnyGroundTruthMatchCounts) {
  std::vector<GraspPose> gts = {GraspPose(0.0, 0.0, 2.0, 2.0, 0.0),
                                GraspPose(20.0, 20.0, 2.0, 2.0, 1.0)};
  EXPECT_TRUE(is_success(GraspPose(20.1, 20.0, 2.0, 2.0, 1.0), gts));
  EXPECT_TRUE(is_success(GraspPose(0.0, 0.1, 2.0, 2.0, 0.0), gts));
  EXPECT_FALSE(is_success(GraspPose(10.0, 10.0, 2.0, 2.0, 0.5), gts));
}

TEST(IsSuccess, EmptyGroundTruthThrows) {
  std::vector<GraspPose> none;
  EXPECT_THROW(is_success(GraspPose(0, 0, 1, 1, 0), none), std::invalid_argument);
}

TEST(HarmonicMean, WorkedExampleAndEdgeCases) {
  EXPECT_DOUBLE_EQ(harmonic_mean(0.53, 0.39), 0.44934782608695656);
  EXPECT_DOUBLE_EQ(harmonic_mean(1.0, 1.0), 1.0);
  EXPECT_DOUBLE_EQ(harmonic_mean(0.0, 0.9), 0.0);
  EXPECT_DOUBLE_EQ(harmonic_mean(0.9, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(harmonic_mean(0.5, 0.5), 0.5);
  EXPECT_THROW(harmonic_mean(-0.1, 0.5), std::invalid_argument);
  EXPECT_THROW(harmonic_mean(0.5, 1.1), std::invalid_argument);
}

TEST(HarmonicMean, StaysBetweenMinAndGeometricMean) {
  // for positive rates: min <= 2ab/(a+b) <= sqrt(ab), with equality iff a == b
  RandomStream rng(5);
  for (int i = 0; i < 100; ++i) {
    double a = rng.uniform(), b = rng.uniform();
    double h = harmonic_mean(a, b);
    EXPECT_GE(h, std::min(a, b) - 1e-15);
    EXPECT_LE(h, std::sqrt(a * b) + 1e-15);
  }
}

}  // namespace
}  // namespace graspflow
