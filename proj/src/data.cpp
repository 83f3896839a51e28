#include "jmpose/data.hpp"

#include <algorithm>
#include <cmath>

namespace jmpose {

double Rect::diagonal() const { return std::sqrt(w * w + h * h); }

Rect crop_and_enlarge(const Rect& box, double factor, double img_w, double img_h) {
  if (box.w <= 0 || box.h <= 0) throw std::invalid_argument("crop_and_enlarge: zero-area box");
  if (factor < 0) throw std::invalid_argument("crop_and_enlarge: negative factor");
  double w = box.w * (1.0 + factor);
  double h = box.h * (1.0 + factor);
  double x0 = std::max(0.0, box.cx() - 0.5 * w);
  double y0 = std::max(0.0, box.cy() - 0.5 * h);
  double x1 = std::min(img_w, box.cx() + 0.5 * w);
  double y1 = std::min(img_h, box.cy() + 0.5 * h);
  return Rect{x0, y0, x1 - x0, y1 - y0};
}

const std::vector<std::string>& joint_names() {
  static const std::vector<std::string> names = {
      "head_top", "nose",    "neck",      "l_shoulder", "r_shoulder",
      "l_elbow",  "r_elbow", "l_wrist",   "r_wrist",    "l_hip",
      "r_hip",    "l_knee",  "r_knee",    "l_ankle",    "r_ankle"};
  return names;
}

const std::vector<std::pair<int, int>>& flip_pairs() {
  static const std::vector<std::pair<int, int>> pairs = {
      {3, 4}, {5, 6}, {7, 8}, {9, 10}, {11, 12}, {13, 14}};
  return pairs;
}

std::optional<Rect> PersonPose::visible_bbox() const {
  double x0 = 1e30, y0 = 1e30, x1 = -1e30, y1 = -1e30;
  bool any = false;
  for (const auto& kp : keypoints) {
    if (!kp.visible) continue;
    any = true;
    x0 = std::min(x0, kp.x);
    y0 = std::min(y0, kp.y);
    x1 = std::max(x1, kp.x);
    y1 = std::max(y1, kp.y);
  }
  if (!any) return std::nullopt;
  return Rect{x0, y0, x1 - x0, y1 - y0};
}

void FrameClip::validate() const {
  if (frames.empty()) throw std::invalid_argument("FrameClip: no frames");
  if (num_frames() != 2 * delta + 1)
    throw std::invalid_argument("FrameClip: expected 2*delta+1 frames");
  if (keyframe_index != delta)
    throw std::invalid_argument("FrameClip: keyframe_index must equal delta");
  for (const auto& f : frames)
    if (!f.same_shape(frames[0])) throw std::invalid_argument("FrameClip: frame shape mismatch");
}

HeatmapStack render_gaussian_heatmaps(const PersonPose& pose, int k, int h, int w,
                                      double sigma, double stride) {
  if (sigma <= 0) throw std::invalid_argument("render_gaussian_heatmaps: sigma must be > 0");
  if (pose.num_joints() != k)
    throw std::invalid_argument("render_gaussian_heatmaps: joint count mismatch");
  HeatmapStack out;
  out.maps = Tensor({k, h, w});
  out.stride = stride;
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int j = 0; j < k; ++j) {
    const Keypoint& kp = pose.keypoints[static_cast<size_t>(j)];
    if (!kp.visible) continue;
    double u = kp.x / stride;
    double v = kp.y / stride;
    // Out of heatmap bounds after scaling: treated as invisible.
    if (u < 0 || u > w - 1 || v < 0 || v > h - 1) continue;
    double* plane = out.maps.plane(j);
    for (int y = 0; y < h; ++y) {
      double dy = y - v;
      for (int x = 0; x < w; ++x) {
        double dx = x - u;
        plane[y * w + x] = std::exp(-(dx * dx + dy * dy) * inv);
      }
    }
  }
  return out;
}

PersonPose decode_heatmaps(const HeatmapStack& hm, double visibility_threshold) {
  if (!hm.maps.all_finite()) throw std::invalid_argument("decode_heatmaps: non-finite heatmap");
  const int k = hm.num_joints(), h = hm.height(), w = hm.width();
  PersonPose pose;
  pose.keypoints.assign(static_cast<size_t>(k), Keypoint{});
  for (int j = 0; j < k; ++j) {
    const double* plane = hm.maps.plane(j);
    int best = 0;
    for (int i = 1; i < h * w; ++i)
      if (plane[i] > plane[best]) best = i;
    int px = best % w, py = best / w;
    double peak = plane[best];
    double u = px, v = py;
    // Quarter-cell shift toward the larger of the two axis neighbors.
    if (px > 0 && px < w - 1) u += 0.25 * ((plane[py * w + px + 1] > plane[py * w + px - 1]) ? 1.0 : -1.0);
    if (py > 0 && py < h - 1) v += 0.25 * ((plane[(py + 1) * w + px] > plane[(py - 1) * w + px]) ? 1.0 : -1.0);
    Keypoint& kp = pose.keypoints[static_cast<size_t>(j)];
    kp.x = u * hm.stride;
    kp.y = v * hm.stride;
    kp.visible = peak > visibility_threshold;
  }
  return pose;
}

}  // namespace jmpose
