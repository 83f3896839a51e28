#pragma once

#include <optional>
#include <string>
#include <vector>

#include "jmpose/common.hpp"

namespace jmpose {

/// Axis-aligned rectangle in pixel coordinates (x, y = top-left corner).
struct Rect {
  double x = 0, y = 0, w = 0, h = 0;
  double cx() const { return x + 0.5 * w; }
  double cy() const { return y + 0.5 * h; }
  double diagonal() const;
  bool contains(double px, double py) const {
    return px >= x && px < x + w && py >= y && py < y + h;
  }
};

/// Grows `box` about its center by `factor` (0.25 = +25% per side length),
/// then clamps against the [0,img_w)x[0,img_h) image. Throws on a zero-area
/// box or negative factor.
Rect crop_and_enlarge(const Rect& box, double factor, double img_w, double img_h);

struct Keypoint {
  double x = 0, y = 0;
  bool visible = false;
};

constexpr int kNumJoints = 15;

/// Canonical joint order; fixed per dataset and identical across clips.
const std::vector<std::string>& joint_names();
/// Index pairs (left, right) that swap under horizontal flips.
const std::vector<std::pair<int, int>>& flip_pairs();

struct PersonPose {
  std::vector<Keypoint> keypoints;  // size kNumJoints

  PersonPose() : keypoints(kNumJoints) {}
  int num_joints() const { return static_cast<int>(keypoints.size()); }
  /// Tight bounding box of the visible keypoints; nullopt when none visible.
  std::optional<Rect> visible_bbox() const;
};

struct ClipMeta {
  bool occluded = false;
  bool defocused = false;
};

/// 2*delta+1 frames cropped around one person, centered on the keyframe.
struct FrameClip {
  std::vector<Tensor> frames;  // each (C, H, W), values in [0,1]
  int delta = 0;
  int keyframe_index = 0;  // == delta
  Rect person_box;
  ClipMeta meta;

  int num_frames() const { return static_cast<int>(frames.size()); }
  void validate() const;
};

/// Per-joint confidence maps (K, H, W) at `stride` image pixels per cell.
struct HeatmapStack {
  Tensor maps;
  double stride = 4.0;

  int num_joints() const { return maps.dim(0); }
  int height() const { return maps.dim(1); }
  int width() const { return maps.dim(2); }
};

/// Renders the ground-truth encoding: channel k holds the unnormalized
/// Gaussian exp(-((u-xk)^2+(v-yk)^2)/(2 sigma^2)) around the joint mapped to
/// heatmap scale (u = x / stride). Invisible joints, and joints that scale
/// outside the map, produce all-zero channels. The peak reaches exactly 1
/// when a joint lies on a cell sample point.
HeatmapStack render_gaussian_heatmaps(const PersonPose& pose, int k, int h, int w,
                                      double sigma, double stride);

/// Argmax decoding with a quarter-cell shift toward the larger axis neighbor,
/// mapped back to image coordinates via the stride. A channel whose peak does
/// not exceed `visibility_threshold` decodes as invisible.
PersonPose decode_heatmaps(const HeatmapStack& hm, double visibility_threshold = 0.25);

}  // namespace jmpose
