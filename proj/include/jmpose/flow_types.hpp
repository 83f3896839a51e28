#pragma once

#include "jmpose/common.hpp"

namespace jmpose {

/// Per-pixel displacement field: pixel p in the source frame moves to
/// p + (u(p), v(p)) in the target frame. Units are pixels at the field's own
/// resolution.
struct FlowField {
  Tensor u;  // (H, W) x-displacement
  Tensor v;  // (H, W) y-displacement

  FlowField() = default;
  FlowField(int h, int w) : u(Tensor({h, w})), v(Tensor({h, w})) {}
  int height() const { return u.dim(0); }
  int width() const { return u.dim(1); }
  bool same_shape(const FlowField& o) const { return u.same_shape(o.u); }
};

/// Two stacked flows at heatmap resolution, channel order fixed as
/// [u_prev, v_prev, u_next, v_next].
struct MotionVolume {
  Tensor channels;  // (4, H, W)

  int height() const { return channels.dim(1); }
  int width() const { return channels.dim(2); }
};

}  // namespace jmpose
