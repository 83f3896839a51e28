#pragma once

#include <array>
#include <optional>

#include "jmpose/data.hpp"
#include "jmpose/flow_types.hpp"

namespace jmpose {

/// Stick-figure proportions in pixels.
struct FigureSpec {
  double torso_len = 22;
  double head_len = 9;       // neck..head_top
  double upper_arm = 10;
  double forearm = 9;
  double thigh = 12;
  double shin = 11;
  double shoulder_half = 7;
  double hip_half = 5;
  double limb_width = 2.0;   // capsule diameter
};

/// Articulation angles, radians. Torso is absolute (0 = upright); the rest
/// are relative to their parent segment.
struct FigureAngles {
  double torso = 0;
  double head = 0;
  double l_upper_arm = 0.4, r_upper_arm = -0.4;  // 0 = hanging down
  double l_forearm = 0.2, r_forearm = -0.2;
  double l_thigh = 0.15, r_thigh = -0.15;
  double l_shin = 0.0, r_shin = 0.0;

  static constexpr int kCount = 10;
  double& operator[](int i);
  double operator[](int i) const;
};

struct OccluderSpec {
  Rect box;               // position in frame 0
  double vx = 0, vy = 0;  // translation per frame
  double intensity = 0.55;
};

/// Full description of one synthetic clip. Generation is a pure function of
/// this struct: identical spec (same seed) gives bit-identical output.
struct SyntheticSceneSpec {
  int width = 96, height = 72;
  int delta = 2;
  FigureSpec figure;
  double root_x = 48, root_y = 40;   // pelvis position in frame 0
  double root_vx = 0, root_vy = 0;   // px/frame
  FigureAngles pose0;
  FigureAngles angular_velocity;     // rad/frame, all fields default 0
  double blur_sigma = 0;             // >0 marks the clip defocused
  double noise_sigma = 0;
  std::optional<OccluderSpec> occluder;
  uint64_t seed = 0;

  SyntheticSceneSpec() {
    angular_velocity = FigureAngles{};
    angular_velocity.l_upper_arm = angular_velocity.r_upper_arm = 0;
    angular_velocity.l_forearm = angular_velocity.r_forearm = 0;
    angular_velocity.l_thigh = angular_velocity.r_thigh = 0;
    angular_velocity.l_shin = angular_velocity.r_shin = 0;
  }
};

/// Joint positions for one frame plus the derived pelvis point used by the
/// torso segment. Index 0..14 match joint_names(); index 15 is the pelvis.
struct FigureGeometry {
  std::array<double, 16> px{}, py{};
};

/// Capsule endpoints into FigureGeometry points; shared by the rasterizer and
/// the exact-flow computation (and reconstructible from stored poses).
const std::vector<std::pair<int, int>>& figure_segments();
/// Per-segment capsule width multiplier (the head segment is drawn thicker).
const std::vector<double>& segment_width_scale();

/// Forward kinematics at frame offset f (0-based frame index).
FigureGeometry figure_at_frame(const SyntheticSceneSpec& spec, int frame);

/// Builds geometry from an annotated pose (joints carry the full geometry;
/// the pelvis is the hip midpoint). Used to recompute exact flow for clips
/// loaded from disk, where only poses are stored.
FigureGeometry geometry_from_pose(const PersonPose& pose);

struct SyntheticClip {
  FrameClip clip;
  std::vector<PersonPose> poses;   // per frame
  std::vector<FlowField> flows;    // consecutive pairs, flows[i]: frame i -> i+1
};

/// Renders the clip, derives per-frame poses/visibility, and computes the
/// exact figure-pixel flow between consecutive frames. Throws if the figure
/// leaves the canvas entirely in any frame.
SyntheticClip generate_synthetic_clip(const SyntheticSceneSpec& spec);

/// Anti-aliased coverage (4x4 supersampling) of the figure only, before blur,
/// noise and occluder. Used as the figure mask for flow support and tests.
Tensor render_figure_coverage(const FigureGeometry& geo, const FigureSpec& fig, int h, int w);

/// Exact displacement field of figure pixels between two geometries: each
/// covered pixel is assigned to its nearest capsule and mapped through that
/// segment's similarity transform. Background pixels stay zero. `width_scale`
/// rescales capsule widths (used after scale augmentation).
FlowField flow_between_geometries(const FigureGeometry& a, const FigureGeometry& b,
                                  const FigureSpec& fig, int h, int w,
                                  double width_scale = 1.0);

/// Convenience: exact flow between two annotated poses of the same figure.
FlowField flow_between_poses(const PersonPose& a, const PersonPose& b, int h, int w,
                             double limb_width = 2.0, double width_scale = 1.0);

}  // namespace jmpose
