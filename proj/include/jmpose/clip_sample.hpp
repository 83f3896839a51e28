#pragma once

#include <string>
#include <vector>

#include "jmpose/data.hpp"
#include "jmpose/flow_types.hpp"

namespace jmpose {

/// One annotated clip as consumed by the pipeline: frames, per-frame poses,
/// and (optionally) the stored consecutive-pair flow fields, where flows[i]
/// maps frame i to frame i+1.
struct ClipSample {
  FrameClip clip;
  std::vector<PersonPose> poses;
  std::vector<FlowField> flows;
  std::string id;

  const PersonPose& keyframe_pose() const {
    return poses[static_cast<size_t>(clip.keyframe_index)];
  }
};

}  // namespace jmpose
