#pragma once

#include <memory>
#include <string>

#include "jmpose/clip_sample.hpp"
#include "jmpose/flow_types.hpp"

namespace jmpose {

/// Dense classical flow between two frames: pyramidal integer block matching
/// with parabolic sub-pixel refinement. The fallback path for clips without
/// exact flow. Throws on shape mismatch.
FlowField estimate_flow(const Tensor& frame_a, const Tensor& frame_b);

/// Produces flow between two frames of a clip. Stateless after construction;
/// concurrent calls on distinct inputs are safe.
class FlowProvider {
 public:
  virtual ~FlowProvider() = default;
  virtual FlowField between(const ClipSample& sample, int from, int to) const = 0;
  virtual std::string name() const = 0;
};

/// Exact flow recomputed from the per-frame annotated poses (any frame pair,
/// both directions). The default for synthetic data.
class OracleFlowProvider : public FlowProvider {
 public:
  explicit OracleFlowProvider(double limb_width = 2.0, double width_scale = 1.0)
      : limb_width_(limb_width), width_scale_(width_scale) {}
  FlowField between(const ClipSample& sample, int from, int to) const override;
  std::string name() const override { return "oracle"; }

 private:
  double limb_width_;
  double width_scale_;
};

/// Block-matching on the frames themselves.
class BlockMatchFlowProvider : public FlowProvider {
 public:
  FlowField between(const ClipSample& sample, int from, int to) const override;
  std::string name() const override { return "blockmatch"; }
};

/// Serves the consecutive-pair flow fields stored with the clip (loaded from
/// "JMFL" files); multi-frame spans are composed by chaining fields. Only
/// forward spans (from <= to) are available.
class StoredFlowProvider : public FlowProvider {
 public:
  FlowField between(const ClipSample& sample, int from, int to) const override;
  std::string name() const override { return "file"; }
};

std::unique_ptr<FlowProvider> make_flow_provider(const std::string& name);

/// Composes a -> b -> c by sampling `bc` bilinearly at the positions displaced
/// by `ab` (zero outside).
FlowField compose_flows(const FlowField& ab, const FlowField& bc);

/// Concatenates flow(keyframe-delta -> keyframe) and flow(keyframe ->
/// keyframe+delta), area-averaged down to heatmap resolution with the
/// displacement magnitudes divided by the stride. Channel order
/// [u_prev, v_prev, u_next, v_next].
MotionVolume build_motion_volume(const ClipSample& sample, const FlowProvider& provider,
                                 int stride);

}  // namespace jmpose
