#pragma once

#include "jmpose/nn.hpp"

namespace jmpose {

/// Per-frame encoder: four convolution stages (in -> c1 -> c2 -> c3 -> K),
/// strides 1,2,2,1 for a total downsample of 4, rectified-linear between
/// stages and a linear final layer. Produces K-channel heatmaps at heatmap
/// resolution.
struct Backbone {
  int in_ch = 1, k_joints = 15;
  nn::Conv2d conv1, conv2, conv3, conv4;

  Backbone() = default;
  Backbone(nn::ParamStore& ps, const std::string& name, int in_c, int k, int c1 = 16,
           int c2 = 32, int c3 = 64);
  void init(nn::ParamStore& ps, Rng& rng) const;

  struct Acts {
    Tensor x, a1, a2, a3, out;
  };

  /// Heatmaps for one frame; throws if the frame channel count mismatches.
  Tensor forward(const double* wbase, const Tensor& frame, Acts& acts) const;
  Tensor backward(const double* wbase, const Acts& acts, const Tensor& gy, double* gbase) const;
};

/// Learned 1x1 convolution over the channel-stacked per-frame heatmaps,
/// (2*delta+1)*K -> K. Linear when the bias is zero.
struct HeatmapAggregator {
  int frames = 5, k_joints = 15;
  nn::Conv2d conv;

  HeatmapAggregator() = default;
  HeatmapAggregator(nn::ParamStore& ps, const std::string& name, int num_frames, int k);

  /// Initializes to select the keyframe block exactly, plus `noise` stddev on
  /// all taps (noise = 0 reproduces the keyframe stack bit-exactly).
  void init_keyframe_identity(nn::ParamStore& ps, Rng& rng, double noise) const;

  Tensor stack(const std::vector<Tensor>& stacks) const;
  Tensor forward(const double* wbase, const Tensor& stacked) const;
  Tensor backward(const double* wbase, const Tensor& stacked, const Tensor& gy,
                  double* gbase) const;
};

}  // namespace jmpose
