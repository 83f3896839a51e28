#pragma once

#include "jmpose/nn.hpp"

namespace jmpose {

/// Shape contract of a modulated deformable convolution: k*k sampling taps
/// per output location, each displaced by a learned 2-d offset and scaled by
/// a learned modulation weight. Offsets are shared across input channels
/// (single deformable group).
struct DeformableKernelSpec {
  int kernel_size = 3;
  int in_channels = 0;
  int out_channels = 0;
  int padding = 1;
  int dilation = 1;

  int taps() const { return kernel_size * kernel_size; }
  int offset_channels() const { return 2 * taps(); }
  int weight_channels() const { return taps(); }
};

/// Offset tensor layout: for tap q = ky*k + kx (row-major over the kernel),
/// channel 2q holds the x-displacement and channel 2q+1 the y-displacement.
/// Sampling position for output (y,x) and tap q is
///   (x - padding + kx*dilation + dx_q(y,x), y - padding + ky*dilation + dy_q(y,x)),
/// read bilinearly with out-of-bounds values taken as zero.
struct DeformableConv {
  DeformableKernelSpec spec;
  nn::Param w, b;  // w: (out, in, k, k)

  DeformableConv() = default;
  DeformableConv(nn::ParamStore& ps, const std::string& name, const DeformableKernelSpec& s);
  void init_he(nn::ParamStore& ps, Rng& rng, double gain = 1.0) const;

  /// out[co](p) = b[co] + sum_ci sum_q w[co,ci,q] * jw[q](p) * sample(m[ci], p, q).
  /// Throws when jo/jw channel counts do not match the spec.
  Tensor forward(const double* wbase, const Tensor& m, const Tensor& jo, const Tensor& jw) const;

  /// Accumulates kernel grads into gbase and fills gm/gjo/gjw (same shapes as
  /// the inputs).
  void backward(const double* wbase, const Tensor& m, const Tensor& jo, const Tensor& jw,
                const Tensor& gy, double* gbase, Tensor& gm, Tensor& gjo, Tensor& gjw) const;
};

/// Nested-loop reference with explicit per-tap bilinear sampling; kept simple
/// and obviously faithful to the definition above so the production kernel
/// can be verified against it.
Tensor deformable_conv_reference(const DeformableKernelSpec& spec, const double* kernel_w,
                                 const double* kernel_b, const Tensor& m, const Tensor& jo,
                                 const Tensor& jw);

}  // namespace jmpose
