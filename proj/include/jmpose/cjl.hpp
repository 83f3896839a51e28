#pragma once

#include "jmpose/deformable.hpp"
#include "jmpose/nn.hpp"

namespace jmpose {

/// Context-aware joint learner: fuses the aggregated heatmap with the motion
/// volume, predicts per-location deformable offsets (raw) and modulation
/// weights (sigmoid-bounded), and retrieves the joint feature from the motion
/// volume through a modulated deformable convolution. The offset and weight
/// branches share no parameters.
struct Cjl {
  int hm_ch = 15, mv_ch = 4, c = 32, k = 3;
  nn::Conv2d fuse1, fuse2;
  nn::Conv2d off_a, off_b, off_out;
  nn::Conv2d wgt_a, wgt_b, wgt_out;
  DeformableConv deform;

  Cjl() = default;
  Cjl(nn::ParamStore& ps, const std::string& name, int heatmap_ch, int motion_ch, int channels,
      int out_channels, int kernel = 3);
  void init(nn::ParamStore& ps, Rng& rng) const;

  struct Acts {
    Tensor h_hat, mv;        // inputs
    Tensor cat, f1, r;       // fusion path (post-relu f1, r)
    Tensor oa, ob, osum, jo;  // offset branch (osum = post-relu residual sum)
    Tensor wa, wb, wsum, wpre, jw;  // weight branch; jw is post-sigmoid
    Tensor j;                // output feature
  };

  /// {h_hat (+) mv} -> R_t via two convolution blocks.
  Tensor fuse(const double* wbase, const Tensor& h_hat, const Tensor& mv, Acts& acts) const;
  /// R_t -> (JO_t raw 2k^2 channels, JW_t sigmoid k^2 channels).
  void predict_offsets_weights(const double* wbase, Acts& acts) const;
  /// Full composition; returns J_t.
  Tensor forward(const double* wbase, const Tensor& h_hat, const Tensor& mv, Acts& acts) const;
  /// Returns grads w.r.t. (h_hat, mv).
  void backward(const double* wbase, const Acts& acts, const Tensor& gj, double* gbase,
                Tensor& gh_hat, Tensor& gmv) const;
};

}  // namespace jmpose
