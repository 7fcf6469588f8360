#include "graspflow/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace graspflow {

namespace {

bool all_finite(const GraspPose& g) {
  return std::isfinite(g.cx) && std::isfinite(g.cy) && std::isfinite(g.w) &&
         std::isfinite(g.h) && std::isfinite(g.theta);
}

// signed shoelace area; positive for counter-clockwise rings
double polygon_area(const std::vector<Eigen::Vector2d>& poly) {
  double s = 0.0;
  int n = static_cast<int>(poly.size());
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d& p = poly[i];
    const Eigen::Vector2d& q = poly[(i + 1) % n];
    s += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * s;
}

double cross2(const Eigen::Vector2d& o, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

// Sutherland-Hodgman clip of a convex subject polygon against one directed
// edge (e0 -> e1) of a counter-clockwise clip polygon. Points exactly on the
// edge count as inside (cross >= 0, no epsilon) so identical rectangles clip
// to themselves and score IoU exactly 1.
std::vector<Eigen::Vector2d> clip_edge(const std::vector<Eigen::Vector2d>& subject,
                                       const Eigen::Vector2d& e0, const Eigen::Vector2d& e1) {
  std::vector<Eigen::Vector2d> out;
  int n = static_cast<int>(subject.size());
  out.reserve(n + 1);
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d& cur = subject[i];
    const Eigen::Vector2d& nxt = subject[(i + 1) % n];
    double c_cur = cross2(e0, e1, cur);
    double c_nxt = cross2(e0, e1, nxt);
    bool in_cur = c_cur >= 0.0;
    bool in_nxt = c_nxt >= 0.0;
    if (in_cur) out.push_back(cur);
    if (in_cur != in_nxt) {
      double t = c_cur / (c_cur - c_nxt);
      out.push_back(cur + t * (nxt - cur));
    }
  }
  return out;
}

}  // namespace

GraspPose::GraspPose(double cx_, double cy_, double w_, double h_, double theta_)
    : cx(cx_), cy(cy_), w(w_), h(h_), theta(canonical_angle(theta_)) {
  if (!all_finite(*this) || w <= 0.0 || h <= 0.0)
    throw std::invalid_argument("GraspPose: sides must be positive and all fields finite");
}

double canonical_angle(double theta) {
  double r = std::fmod(theta + M_PI / 2.0, M_PI);
  if (r < 0.0) r += M_PI;
  return r - M_PI / 2.0;
}

PoseVec encode_pose(const GraspPose& g, double scene_extent) {
  if (!(scene_extent > 0.0) || !std::isfinite(scene_extent))
    throw std::invalid_argument("encode_pose: scene_extent must be positive");
  PoseVec v;
  v << 2.0 * g.cx / scene_extent - 1.0, 2.0 * g.cy / scene_extent - 1.0,
      2.0 * g.w / scene_extent - 1.0, 2.0 * g.h / scene_extent - 1.0,
      g.theta / (M_PI / 2.0);
  return v;
}

GraspPose decode_pose(const PoseVec& v, double scene_extent) {
  if (!(scene_extent > 0.0) || !std::isfinite(scene_extent))
    throw std::invalid_argument("decode_pose: scene_extent must be positive");
  double floor = 1e-3 * scene_extent;
  double cx = (v(0) + 1.0) * scene_extent / 2.0;
  double cy = (v(1) + 1.0) * scene_extent / 2.0;
  double w = (v(2) + 1.0) * scene_extent / 2.0;
  double h = (v(3) + 1.0) * scene_extent / 2.0;
  if (!(w > 0.0)) w = floor;
  if (!(h > 0.0)) h = floor;
  return GraspPose(cx, cy, w, h, canonical_angle(v(4) * (M_PI / 2.0)));
}

std::array<Eigen::Vector2d, 4> rect_corners(const GraspPose& g) {
  double c = std::cos(g.theta), s = std::sin(g.theta);
  double hw = 0.5 * g.w, hh = 0.5 * g.h;
  Eigen::Vector2d center(g.cx, g.cy);
  auto rot = [&](double x, double y) {
    return Eigen::Vector2d(center.x() + c * x - s * y, center.y() + s * x + c * y);
  };
  // counter-clockwise starting from the (+,+) corner
  return {rot(hw, hh), rot(-hw, hh), rot(-hw, -hh), rot(hw, -hh)};
}

double rect_iou(const GraspPose& a, const GraspPose& b, bool* degenerate) {
  if (degenerate) *degenerate = false;
  double area_a = a.w * a.h;
  double area_b = b.w * b.h;
  if (!(area_a > 0.0) || !(area_b > 0.0) || !std::isfinite(area_a) || !std::isfinite(area_b)) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }

  auto ca = rect_corners(a);
  auto cb = rect_corners(b);
  std::vector<Eigen::Vector2d> poly(ca.begin(), ca.end());
  for (int e = 0; e < 4 && !poly.empty(); ++e)
    poly = clip_edge(poly, cb[e], cb[(e + 1) % 4]);
  if (poly.size() < 3) return 0.0;

  double inter = std::abs(polygon_area(poly));
  double uni = area_a + area_b - inter;
  if (!(uni > 0.0)) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  double iou = inter / uni;
  return iou < 0.0 ? 0.0 : (iou > 1.0 ? 1.0 : iou);
}

double angle_offset(const GraspPose& a, const GraspPose& b) {
  double d = std::fmod(std::abs(a.theta - b.theta), M_PI);
  return std::min(d, M_PI - d);
}

bool is_success(const GraspPose& pred, const std::vector<GraspPose>& gts) {
  if (gts.empty()) throw std::invalid_argument("is_success: empty ground-truth list");
  for (const GraspPose& g : gts) {
    if (rect_iou(pred, g) > kIouThreshold && angle_offset(pred, g) < kAngleThreshold)
      return true;
  }
  return false;
}

double harmonic_mean(double seen, double unseen) {
  if (seen < 0.0 || seen > 1.0 || unseen < 0.0 || unseen > 1.0)
    throw std::invalid_argument("harmonic_mean: rates must lie in [0,1]");
  if (seen == 0.0 || unseen == 0.0) return 0.0;
  return 2.0 * seen * unseen / (seen + unseen);
}

}  // namespace graspflow
