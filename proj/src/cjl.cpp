#include "jmpose/cjl.hpp"

namespace jmpose {

using nn::Conv2d;

Cjl::Cjl(nn::ParamStore& ps, const std::string& name, int heatmap_ch, int motion_ch, int channels,
         int out_channels, int kernel)
    : hm_ch(heatmap_ch), mv_ch(motion_ch), c(channels), k(kernel) {
  fuse1 = Conv2d(ps, name + ".fuse1", heatmap_ch + motion_ch, channels, 3, 1, 1);
  fuse2 = Conv2d(ps, name + ".fuse2", channels, channels, 3, 1, 1);
  DeformableKernelSpec spec;
  spec.kernel_size = kernel;
  spec.in_channels = motion_ch;
  spec.out_channels = out_channels;
  spec.padding = kernel / 2;
  off_a = Conv2d(ps, name + ".off_a", channels, channels, 3, 1, 1);
  off_b = Conv2d(ps, name + ".off_b", channels, channels, 3, 1, 1);
  off_out = Conv2d(ps, name + ".off_out", channels, spec.offset_channels(), 3, 1, 1);
  wgt_a = Conv2d(ps, name + ".wgt_a", channels, channels, 3, 1, 1);
  wgt_b = Conv2d(ps, name + ".wgt_b", channels, channels, 3, 1, 1);
  wgt_out = Conv2d(ps, name + ".wgt_out", channels, spec.weight_channels(), 3, 1, 1);
  deform = DeformableConv(ps, name + ".deform", spec);
}

void Cjl::init(nn::ParamStore& ps, Rng& rng) const {
  fuse1.init_he(ps, rng);
  fuse2.init_he(ps, rng);
  off_a.init_he(ps, rng);
  off_b.init_he(ps, rng);
  wgt_a.init_he(ps, rng);
  wgt_b.init_he(ps, rng);
  // Offsets start at zero (plain convolution behaviour); modulation starts
  // near 0.9 so early gradients are not attenuated.
  std::fill(ps.wp(off_out.w), ps.wp(off_out.w) + off_out.w.count, 0.0);
  std::fill(ps.wp(off_out.b), ps.wp(off_out.b) + off_out.b.count, 0.0);
  std::fill(ps.wp(wgt_out.w), ps.wp(wgt_out.w) + wgt_out.w.count, 0.0);
  std::fill(ps.wp(wgt_out.b), ps.wp(wgt_out.b) + wgt_out.b.count, 2.0);
  deform.init_he(ps, rng);
}

Tensor Cjl::fuse(const double* wbase, const Tensor& h_hat, const Tensor& mv, Acts& acts) const {
  if (h_hat.dim(1) != mv.dim(1) || h_hat.dim(2) != mv.dim(2))
    throw std::invalid_argument("Cjl::fuse: spatial shape mismatch");
  acts.h_hat = h_hat;
  acts.mv = mv;
  acts.cat = nn::concat_channels(h_hat, mv);
  acts.f1 = nn::relu(fuse1.forward(wbase, acts.cat));
  acts.r = nn::relu(fuse2.forward(wbase, acts.f1));
  return acts.r;
}

void Cjl::predict_offsets_weights(const double* wbase, Acts& acts) const {
  // Residual block: relu(r + conv_b(relu(conv_a(r)))), then the head conv.
  acts.oa = nn::relu(off_a.forward(wbase, acts.r));
  acts.ob = off_b.forward(wbase, acts.oa);
  acts.osum = acts.ob;
  acts.osum += acts.r;
  acts.osum = nn::relu(acts.osum);
  acts.jo = off_out.forward(wbase, acts.osum);

  acts.wa = nn::relu(wgt_a.forward(wbase, acts.r));
  acts.wb = wgt_b.forward(wbase, acts.wa);
  acts.wsum = acts.wb;
  acts.wsum += acts.r;
  acts.wsum = nn::relu(acts.wsum);
  acts.wpre = wgt_out.forward(wbase, acts.wsum);
  acts.jw = nn::sigmoid(acts.wpre);
}

Tensor Cjl::forward(const double* wbase, const Tensor& h_hat, const Tensor& mv,
                    Acts& acts) const {
  fuse(wbase, h_hat, mv, acts);
  predict_offsets_weights(wbase, acts);
  acts.j = deform.forward(wbase, mv, acts.jo, acts.jw);
  return acts.j;
}

void Cjl::backward(const double* wbase, const Acts& acts, const Tensor& gj, double* gbase,
                   Tensor& gh_hat, Tensor& gmv) const {
  Tensor gmv_deform, gjo, gjw;
  deform.backward(wbase, acts.mv, acts.jo, acts.jw, gj, gbase, gmv_deform, gjo, gjw);

  // Weight branch.
  Tensor gwpre = nn::sigmoid_backward(acts.jw, gjw);
  Tensor gwsum = wgt_out.backward(wbase, acts.wsum, gwpre, gbase);
  gwsum = nn::relu_backward(acts.wsum, gwsum);
  Tensor gr = gwsum;  // identity skip
  Tensor gwa = wgt_b.backward(wbase, acts.wa, gwsum, gbase);
  gwa = nn::relu_backward(acts.wa, gwa);
  gr += wgt_a.backward(wbase, acts.r, gwa, gbase);

  // Offset branch.
  Tensor gosum = off_out.backward(wbase, acts.osum, gjo, gbase);
  gosum = nn::relu_backward(acts.osum, gosum);
  gr += gosum;
  Tensor goa = off_b.backward(wbase, acts.oa, gosum, gbase);
  goa = nn::relu_backward(acts.oa, goa);
  gr += off_a.backward(wbase, acts.r, goa, gbase);

  // Fusion path back to the inputs.
  gr = nn::relu_backward(acts.r, gr);
  Tensor gf1 = fuse2.backward(wbase, acts.f1, gr, gbase);
  gf1 = nn::relu_backward(acts.f1, gf1);
  Tensor gcat = fuse1.backward(wbase, acts.cat, gf1, gbase);

  gh_hat = Tensor({acts.h_hat.dim(0), acts.h_hat.dim(1), acts.h_hat.dim(2)});
  gmv = Tensor({acts.mv.dim(0), acts.mv.dim(1), acts.mv.dim(2)});
  nn::split_channels(gcat, gh_hat, gmv);
  gmv += gmv_deform;
}

}  // namespace jmpose
