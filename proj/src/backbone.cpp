#include "jmpose/backbone.hpp"

namespace jmpose {

using nn::Conv2d;

Backbone::Backbone(nn::ParamStore& ps, const std::string& name, int in_c, int k, int c1, int c2,
                   int c3)
    : in_ch(in_c), k_joints(k) {
  conv1 = Conv2d(ps, name + ".conv1", in_c, c1, 3, 1, 1);
  conv2 = Conv2d(ps, name + ".conv2", c1, c2, 3, 2, 1);
  conv3 = Conv2d(ps, name + ".conv3", c2, c3, 3, 2, 1);
  conv4 = Conv2d(ps, name + ".conv4", c3, k, 3, 1, 1);
}

void Backbone::init(nn::ParamStore& ps, Rng& rng) const {
  conv1.init_he(ps, rng);
  conv2.init_he(ps, rng);
  conv3.init_he(ps, rng);
  conv4.init_he(ps, rng, 0.5);  // linear output layer, smaller start
}

Tensor Backbone::forward(const double* wbase, const Tensor& frame, Acts& acts) const {
  if (frame.ndim() != 3 || frame.dim(0) != in_ch)
    throw std::invalid_argument("Backbone: frame shape mismatch");
  acts.x = frame;
  acts.a1 = nn::relu(conv1.forward(wbase, acts.x));
  acts.a2 = nn::relu(conv2.forward(wbase, acts.a1));
  acts.a3 = nn::relu(conv3.forward(wbase, acts.a2));
  acts.out = conv4.forward(wbase, acts.a3);
  return acts.out;
}

Tensor Backbone::backward(const double* wbase, const Acts& acts, const Tensor& gy,
                          double* gbase) const {
  Tensor g3 = conv4.backward(wbase, acts.a3, gy, gbase);
  g3 = nn::relu_backward(acts.a3, g3);
  Tensor g2 = conv3.backward(wbase, acts.a2, g3, gbase);
  g2 = nn::relu_backward(acts.a2, g2);
  Tensor g1 = conv2.backward(wbase, acts.a1, g2, gbase);
  g1 = nn::relu_backward(acts.a1, g1);
  return conv1.backward(wbase, acts.x, g1, gbase);
}

HeatmapAggregator::HeatmapAggregator(nn::ParamStore& ps, const std::string& name, int num_frames,
                                     int k)
    : frames(num_frames), k_joints(k) {
  conv = Conv2d(ps, name + ".conv", num_frames * k, k, 1, 1, 0);
}

void HeatmapAggregator::init_keyframe_identity(nn::ParamStore& ps, Rng& rng, double noise) const {
  double* w = ps.wp(conv.w);
  if (noise > 0)
    nn::init_normal(w, conv.w.count, noise, rng);
  else
    std::fill(w, w + conv.w.count, 0.0);
  const int kf = frames / 2;
  for (int j = 0; j < k_joints; ++j)
    w[static_cast<size_t>(j) * conv.in_ch + (kf * k_joints + j)] = 1.0;
  std::fill(ps.wp(conv.b), ps.wp(conv.b) + conv.b.count, 0.0);
}

Tensor HeatmapAggregator::stack(const std::vector<Tensor>& stacks) const {
  if (static_cast<int>(stacks.size()) != frames)
    throw std::invalid_argument("HeatmapAggregator: expected 2*delta+1 stacks");
  for (const auto& s : stacks)
    if (!s.same_shape(stacks[0]))
      throw std::invalid_argument("HeatmapAggregator: inconsistent stack shapes");
  const int k = stacks[0].dim(0), h = stacks[0].dim(1), w = stacks[0].dim(2);
  if (k != k_joints) throw std::invalid_argument("HeatmapAggregator: joint count mismatch");
  Tensor out({frames * k, h, w});
  double* dst = out.ptr();
  for (const auto& s : stacks) {
    std::copy(s.ptr(), s.ptr() + s.size(), dst);
    dst += s.size();
  }
  return out;
}

Tensor HeatmapAggregator::forward(const double* wbase, const Tensor& stacked) const {
  return conv.forward(wbase, stacked);
}

Tensor HeatmapAggregator::backward(const double* wbase, const Tensor& stacked, const Tensor& gy,
                                   double* gbase) const {
  return conv.backward(wbase, stacked, gy, gbase);
}

}  // namespace jmpose
