#pragma once

#include <array>
#include <vector>

#include <Eigen/Dense>

namespace graspflow {

// Normalized pose vector: (cx, cy, w, h, theta) mapped into [-1,1]^5. This is
// the diffusion state; noisy states may leave the box and that is fine.
using PoseVec = Eigen::Matrix<double, 5, 1>;

inline constexpr int kPoseDim = 5;

// 5-DoF grasp rectangle in scene units. theta is canonicalized into
// [-pi/2, pi/2); a rectangle is pi-periodic in its orientation so this loses
// nothing.
struct GraspPose {
  double cx = 0.0;
  double cy = 0.0;
  double w = 1.0;
  double h = 1.0;
  double theta = 0.0;

  GraspPose() = default;
  GraspPose(double cx, double cy, double w, double h, double theta);
};

// reduce an angle into [-pi/2, pi/2) under pi-periodicity
double canonical_angle(double theta);

// affine map into [-1,1]^5: (2 cx/E - 1, 2 cy/E - 1, 2 w/E - 1, 2 h/E - 1,
// theta/(pi/2)). Throws std::invalid_argument for non-positive extent.
PoseVec encode_pose(const GraspPose& g, double scene_extent);

// Total inverse of encode_pose. Out-of-range inputs are accepted: w and h are
// clamped to 1e-3 * extent when the decoded value is non-positive, theta is
// reduced into [-pi/2, pi/2).
GraspPose decode_pose(const PoseVec& v, double scene_extent);

// corners in counter-clockwise order
std::array<Eigen::Vector2d, 4> rect_corners(const GraspPose& g);

// Intersection-over-union of two oriented rectangles by convex polygon
// clipping. Degenerate (zero-area) input scores 0 and sets *degenerate if
// given; it never throws, so a collapsed prediction counts as a failure.
double rect_iou(const GraspPose& a, const GraspPose& b, bool* degenerate = nullptr);

// orientation distance under pi-periodicity, in [0, pi/2]
double angle_offset(const GraspPose& a, const GraspPose& b);

// success thresholds, strict inequalities: IoU exceeding 25% and offset angle
// less than 30 degrees
inline constexpr double kIouThreshold = 0.25;
inline constexpr double kAngleThreshold = M_PI / 6.0;

// best-of-set match against the ground-truth list; empty list throws
// std::invalid_argument
bool is_success(const GraspPose& pred, const std::vector<GraspPose>& gts);

// 2ab/(a+b); returns 0 when either rate is 0. Rates outside [0,1] throw.
double harmonic_mean(double seen, double unseen);

}  // namespace graspflow
