#pragma once

#include "jmpose/nn.hpp"

namespace jmpose {

/// Flattens (C,H,W) to row-major spatial tokens (N=H*W rows, C columns) and
/// back. The row-major order is part of the contract (oracle tests match it).
Tensor chw_to_tokens(const Tensor& x);
Tensor tokens_to_chw(const Tensor& t, int c, int h, int w);

/// One joint-motion interaction block: per-stream pre-convolution, symmetric
/// cross-attention with residual additions, then a sigmoid channel-chunk gate
/// whose first C channels rescale the joint stream and last C the motion
/// stream. Masks derive from the attended features but multiply the
/// pre-attention features.
struct JmibLayer {
  int in_j = 0, in_m = 0, c = 0, d = 0;
  int max_tokens = 8192;
  nn::Conv2d ups_j, ups_m;              // pre-conv blocks, one per stream
  nn::Conv2d qj, km, vm, qm, kj, vj;    // six independent projections
  nn::Conv2d gate;                      // 1x1 over the 2C concat

  JmibLayer() = default;
  JmibLayer(nn::ParamStore& ps, const std::string& name, int in_joint, int in_motion,
            int channels, int attn_dim, int max_tokens_);
  void init(nn::ParamStore& ps, Rng& rng) const;

  struct Acts {
    Tensor j_in, m_in;
    Tensor j_pre, m_pre;                    // post pre-conv + relu
    Tensor qj_t, km_t, vm_t, qm_t, kj_t, vj_t;  // token matrices
    Tensor p_jm, p_mj;                      // attention rows (softmax output)
    Tensor j_att, m_att;                    // attention + residual, (C,H,W)
    Tensor gate_in, masks;                  // masks = sigmoid(gate(...)), 2C channels
    Tensor j_out, m_out;
  };

  /// Attention stage on given pre-features (also used directly by tests).
  void attend(const double* wbase, const Tensor& j_pre, const Tensor& m_pre, Acts& acts) const;
  /// Gate stage with explicit masks (tests inject exact mask values here).
  static void apply_masks(const Tensor& masks, const Tensor& j_pre, const Tensor& m_pre,
                          Tensor& j_out, Tensor& m_out);

  void forward(const double* wbase, const Tensor& j_in, const Tensor& m_in, Acts& acts) const;
  /// Returns grads w.r.t. (j_in, m_in); parameter grads accumulate in gbase.
  void backward(const double* wbase, const Acts& acts, const Tensor& gj_out,
                const Tensor& gm_out, double* gbase, Tensor& gj_in, Tensor& gm_in) const;
};

/// Progressive stack of L interaction blocks. Layer 1 lifts the stream
/// channel counts to C; later layers are C -> C.
struct Jmml {
  int layers_n = 4, c = 32;
  std::vector<JmibLayer> layers;

  Jmml() = default;
  Jmml(nn::ParamStore& ps, const std::string& name, int num_layers, int in_joint, int in_motion,
       int channels, int attn_dim, int max_tokens);
  void init(nn::ParamStore& ps, Rng& rng) const;

  struct Acts {
    std::vector<JmibLayer::Acts> layer;
  };

  /// Runs all layers; every intermediate (J^i, M^i) stays in acts for the
  /// per-layer orthogonality loss.
  void forward(const double* wbase, const Tensor& j0, const Tensor& m0, Acts& acts) const;
  /// gj_layer/gm_layer carry per-layer injected grads (may hold empty tensors
  /// for layers without extra loss terms); index L-1 additionally receives the
  /// head gradient added by the caller.
  void backward(const double* wbase, const Acts& acts, std::vector<Tensor>& gj_layer,
                std::vector<Tensor>& gm_layer, double* gbase, Tensor& gj0, Tensor& gm0) const;
};

/// Final aggregation + detection: concat(J^L (+) M^L) -> convolution block ->
/// two 3x3 convolutions with K output channels (last one linear). When
/// `with_aggregate` is false the head consumes a single stream directly.
struct DetectHead {
  bool with_aggregate = true;
  int in_ch = 64, c = 32, k_joints = 15;
  nn::Conv2d s_conv, h1, h2;

  DetectHead() = default;
  DetectHead(nn::ParamStore& ps, const std::string& name, bool aggregate, int in_channels,
             int channels, int k);
  void init(nn::ParamStore& ps, Rng& rng) const;

  struct Acts {
    Tensor in, s, a1, out;
  };

  Tensor forward(const double* wbase, const Tensor& in, Acts& acts) const;
  Tensor backward(const double* wbase, const Acts& acts, const Tensor& gy, double* gbase) const;
};

}  // namespace jmpose
