#pragma once

#include <optional>
#include <utility>

#include "jmpose/data.hpp"
#include "jmpose/flow_types.hpp"

namespace jmpose {

/// One geometric transform, applied identically to every frame of a clip and
/// to its poses. Flip mirrors about the vertical axis before the
/// rotation/scale; truncation blanks everything outside the given box.
struct AugmentParams {
  double rotation_deg = 0;
  double scale = 1.0;
  bool flip = false;
  std::optional<Rect> truncation;
};

/// 2x2 linear map anchored at a fixed center: p' = M (p - c) + c.
struct Affine2 {
  double m00 = 1, m01 = 0, m10 = 0, m11 = 1;
  double cx = 0, cy = 0;

  void apply(double x, double y, double& ox, double& oy) const {
    ox = m00 * (x - cx) + m01 * (y - cy) + cx;
    oy = m10 * (x - cx) + m11 * (y - cy) + cy;
  }
  void apply_vector(double x, double y, double& ox, double& oy) const {
    ox = m00 * x + m01 * y;
    oy = m10 * x + m11 * y;
  }
  Affine2 inverse() const;
};

/// The affine realizing `params` on a WxH image, anchored at the pixel-center
/// image midpoint ((W-1)/2, (H-1)/2) so that a pure flip maps x to W-1-x.
Affine2 augment_affine(const AugmentParams& params, int img_w, int img_h);

/// Warps every channel of a (C,H,W) tensor by the affine (inverse-mapped
/// bilinear sampling, zero outside the source).
Tensor warp_affine(const Tensor& chw, const Affine2& fwd);

/// Resamples a displacement field through the affine and maps the vectors by
/// its linear part: f'(p) = M f(A^-1 p).
FlowField transform_flow(const FlowField& flow, const Affine2& fwd);

/// Applies the transform to clip and poses. Horizontal flips also swap
/// left/right joint slots. Joints that land outside the canvas (or outside
/// the truncation box) become invisible.
std::pair<FrameClip, std::vector<PersonPose>> augment(const FrameClip& clip,
                                                      const std::vector<PersonPose>& poses,
                                                      const AugmentParams& params);

}  // namespace jmpose
