#include "jmpose/jmml.hpp"

#include <cmath>

namespace jmpose {

using nn::Conv2d;

Tensor chw_to_tokens(const Tensor& x) {
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const int n = h * w;
  Tensor t({n, c});
  for (int ch = 0; ch < c; ++ch) {
    const double* p = x.plane(ch);
    for (int i = 0; i < n; ++i) t.ptr()[static_cast<size_t>(i) * c + ch] = p[i];
  }
  return t;
}

Tensor tokens_to_chw(const Tensor& t, int c, int h, int w) {
  Tensor x({c, h, w});
  const int n = h * w;
  for (int ch = 0; ch < c; ++ch) {
    double* p = x.plane(ch);
    for (int i = 0; i < n; ++i) p[i] = t.ptr()[static_cast<size_t>(i) * c + ch];
  }
  return x;
}

namespace {

// C = A * B^T for A (N,d), B (M,d).
Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  const int n = a.dim(0), d = a.dim(1), m = b.dim(0);
  Tensor c({n, m});
  for (int i = 0; i < n; ++i) {
    const double* ar = a.ptr() + static_cast<size_t>(i) * d;
    double* cr = c.ptr() + static_cast<size_t>(i) * m;
    for (int j = 0; j < m; ++j) {
      const double* br = b.ptr() + static_cast<size_t>(j) * d;
      double acc = 0;
      for (int k = 0; k < d; ++k) acc += ar[k] * br[k];
      cr[j] = acc;
    }
  }
  return c;
}

// C = A * B for A (N,M), B (M,K).
Tensor matmul_nn(const Tensor& a, const Tensor& b) {
  const int n = a.dim(0), m = a.dim(1), k = b.dim(1);
  Tensor c({n, k});
  for (int i = 0; i < n; ++i) {
    double* cr = c.ptr() + static_cast<size_t>(i) * k;
    const double* ar = a.ptr() + static_cast<size_t>(i) * m;
    for (int p = 0; p < m; ++p) {
      const double av = ar[p];
      if (av == 0.0) continue;
      const double* br = b.ptr() + static_cast<size_t>(p) * k;
      for (int j = 0; j < k; ++j) cr[j] += av * br[j];
    }
  }
  return c;
}

// C = A^T * B for A (M,N), B (M,K)  -> (N,K).
Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  const int m = a.dim(0), n = a.dim(1), k = b.dim(1);
  Tensor c({n, k});
  for (int p = 0; p < m; ++p) {
    const double* ar = a.ptr() + static_cast<size_t>(p) * n;
    const double* br = b.ptr() + static_cast<size_t>(p) * k;
    for (int i = 0; i < n; ++i) {
      const double av = ar[i];
      if (av == 0.0) continue;
      double* cr = c.ptr() + static_cast<size_t>(i) * k;
      for (int j = 0; j < k; ++j) cr[j] += av * br[j];
    }
  }
  return c;
}

}  // namespace

JmibLayer::JmibLayer(nn::ParamStore& ps, const std::string& name, int in_joint, int in_motion,
                     int channels, int attn_dim, int max_tokens_)
    : in_j(in_joint), in_m(in_motion), c(channels), d(attn_dim), max_tokens(max_tokens_) {
  ups_j = Conv2d(ps, name + ".ups_j", in_joint, channels, 3, 1, 1);
  ups_m = Conv2d(ps, name + ".ups_m", in_motion, channels, 3, 1, 1);
  qj = Conv2d(ps, name + ".qj", channels, attn_dim, 1, 1, 0);
  km = Conv2d(ps, name + ".km", channels, attn_dim, 1, 1, 0);
  vm = Conv2d(ps, name + ".vm", channels, channels, 1, 1, 0);
  qm = Conv2d(ps, name + ".qm", channels, attn_dim, 1, 1, 0);
  kj = Conv2d(ps, name + ".kj", channels, attn_dim, 1, 1, 0);
  vj = Conv2d(ps, name + ".vj", channels, channels, 1, 1, 0);
  gate = Conv2d(ps, name + ".gate", 2 * channels, 2 * channels, 1, 1, 0);
}

void JmibLayer::init(nn::ParamStore& ps, Rng& rng) const {
  ups_j.init_he(ps, rng);
  ups_m.init_he(ps, rng);
  for (const Conv2d* p : {&qj, &km, &vm, &qm, &kj, &vj}) p->init_he(ps, rng);
  gate.init_he(ps, rng, 0.5);
  // Bias the gate open (sigmoid ~ 0.88) so early layers pass signal through.
  std::fill(ps.wp(gate.b), ps.wp(gate.b) + gate.b.count, 2.0);
}

void JmibLayer::attend(const double* wbase, const Tensor& j_pre, const Tensor& m_pre,
                       Acts& acts) const {
  const int h = j_pre.dim(1), w = j_pre.dim(2);
  const int n = h * w;
  if (n > max_tokens)
    throw std::invalid_argument("JmibLayer: token count exceeds configured maximum");
  acts.j_pre = j_pre;
  acts.m_pre = m_pre;
  acts.qj_t = chw_to_tokens(qj.forward(wbase, j_pre));
  acts.km_t = chw_to_tokens(km.forward(wbase, m_pre));
  acts.vm_t = chw_to_tokens(vm.forward(wbase, m_pre));
  acts.qm_t = chw_to_tokens(qm.forward(wbase, m_pre));
  acts.kj_t = chw_to_tokens(kj.forward(wbase, j_pre));
  acts.vj_t = chw_to_tokens(vj.forward(wbase, j_pre));
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));

  Tensor s_jm = matmul_nt(acts.qj_t, acts.km_t);
  s_jm *= scale;
  acts.p_jm = nn::softmax_rows(s_jm);
  Tensor o_jm = matmul_nn(acts.p_jm, acts.vm_t);
  acts.j_att = tokens_to_chw(o_jm, c, h, w);
  acts.j_att += j_pre;

  Tensor s_mj = matmul_nt(acts.qm_t, acts.kj_t);
  s_mj *= scale;
  acts.p_mj = nn::softmax_rows(s_mj);
  Tensor o_mj = matmul_nn(acts.p_mj, acts.vj_t);
  acts.m_att = tokens_to_chw(o_mj, c, h, w);
  acts.m_att += m_pre;
}

void JmibLayer::apply_masks(const Tensor& masks, const Tensor& j_pre, const Tensor& m_pre,
                            Tensor& j_out, Tensor& m_out) {
  const int c = j_pre.dim(0), h = j_pre.dim(1), w = j_pre.dim(2);
  j_out = Tensor({c, h, w});
  m_out = Tensor({c, h, w});
  const int64_t plane = static_cast<int64_t>(c) * h * w;
  for (int64_t i = 0; i < plane; ++i) {
    j_out[i] = masks[i] * j_pre[i];
    m_out[i] = masks[plane + i] * m_pre[i];
  }
}

void JmibLayer::forward(const double* wbase, const Tensor& j_in, const Tensor& m_in,
                        Acts& acts) const {
  if (j_in.dim(1) != m_in.dim(1) || j_in.dim(2) != m_in.dim(2))
    throw std::invalid_argument("JmibLayer: stream spatial shapes differ");
  acts.j_in = j_in;
  acts.m_in = m_in;
  Tensor j_pre = nn::relu(ups_j.forward(wbase, j_in));
  Tensor m_pre = nn::relu(ups_m.forward(wbase, m_in));
  attend(wbase, j_pre, m_pre, acts);
  acts.gate_in = nn::concat_channels(acts.j_att, acts.m_att);
  acts.masks = nn::sigmoid(gate.forward(wbase, acts.gate_in));
  apply_masks(acts.masks, acts.j_pre, acts.m_pre, acts.j_out, acts.m_out);
}

void JmibLayer::backward(const double* wbase, const Acts& acts, const Tensor& gj_out,
                         const Tensor& gm_out, double* gbase, Tensor& gj_in,
                         Tensor& gm_in) const {
  const int h = acts.j_pre.dim(1), w = acts.j_pre.dim(2);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));

  // Gate stage.
  Tensor gmask(acts.masks.shape());
  Tensor gj_pre({c, h, w}), gm_pre({c, h, w});
  const int64_t plane = static_cast<int64_t>(c) * h * w;
  for (int64_t i = 0; i < plane; ++i) {
    gj_pre[i] = gj_out[i] * acts.masks[i];
    gm_pre[i] = gm_out[i] * acts.masks[plane + i];
    gmask[i] = gj_out[i] * acts.j_pre[i];
    gmask[plane + i] = gm_out[i] * acts.m_pre[i];
  }
  Tensor ggate_pre = nn::sigmoid_backward(acts.masks, gmask);
  Tensor ggate_in = gate.backward(wbase, acts.gate_in, ggate_pre, gbase);
  Tensor gj_att({c, h, w}), gm_att({c, h, w});
  nn::split_channels(ggate_in, gj_att, gm_att);

  // Joint-stream attention (queries from joint, keys/values from motion).
  gj_pre += gj_att;  // residual
  {
    Tensor go = chw_to_tokens(gj_att);
    Tensor gp = matmul_nt(go, acts.vm_t);          // (N,N)
    Tensor gv = matmul_tn(acts.p_jm, go);          // (N,C)
    Tensor gs = nn::softmax_rows_backward(acts.p_jm, gp);
    gs *= scale;
    Tensor gq = matmul_nn(gs, acts.km_t);          // (N,d)
    Tensor gk = matmul_tn(gs, acts.qj_t);          // (N,d)
    gj_pre += qj.backward(wbase, acts.j_pre, tokens_to_chw(gq, d, h, w), gbase);
    gm_pre += km.backward(wbase, acts.m_pre, tokens_to_chw(gk, d, h, w), gbase);
    gm_pre += vm.backward(wbase, acts.m_pre, tokens_to_chw(gv, c, h, w), gbase);
  }

  // Motion-stream attention (queries from motion, keys/values from joint).
  gm_pre += gm_att;
  {
    Tensor go = chw_to_tokens(gm_att);
    Tensor gp = matmul_nt(go, acts.vj_t);
    Tensor gv = matmul_tn(acts.p_mj, go);
    Tensor gs = nn::softmax_rows_backward(acts.p_mj, gp);
    gs *= scale;
    Tensor gq = matmul_nn(gs, acts.kj_t);
    Tensor gk = matmul_tn(gs, acts.qm_t);
    gm_pre += qm.backward(wbase, acts.m_pre, tokens_to_chw(gq, d, h, w), gbase);
    gj_pre += kj.backward(wbase, acts.j_pre, tokens_to_chw(gk, d, h, w), gbase);
    gj_pre += vj.backward(wbase, acts.j_pre, tokens_to_chw(gv, c, h, w), gbase);
  }

  // Pre-conv blocks.
  gj_pre = nn::relu_backward(acts.j_pre, gj_pre);
  gm_pre = nn::relu_backward(acts.m_pre, gm_pre);
  gj_in = ups_j.backward(wbase, acts.j_in, gj_pre, gbase);
  gm_in = ups_m.backward(wbase, acts.m_in, gm_pre, gbase);
}

Jmml::Jmml(nn::ParamStore& ps, const std::string& name, int num_layers, int in_joint,
           int in_motion, int channels, int attn_dim, int max_tokens)
    : layers_n(num_layers), c(channels) {
  if (num_layers < 1) throw std::invalid_argument("Jmml: need at least one layer");
  for (int i = 0; i < num_layers; ++i) {
    int ij = i == 0 ? in_joint : channels;
    int im = i == 0 ? in_motion : channels;
    layers.emplace_back(ps, name + ".layer" + std::to_string(i + 1), ij, im, channels, attn_dim,
                        max_tokens);
  }
}

void Jmml::init(nn::ParamStore& ps, Rng& rng) const {
  for (const auto& l : layers) l.init(ps, rng);
}

void Jmml::forward(const double* wbase, const Tensor& j0, const Tensor& m0, Acts& acts) const {
  acts.layer.resize(layers.size());
  const Tensor* j = &j0;
  const Tensor* m = &m0;
  for (size_t i = 0; i < layers.size(); ++i) {
    layers[i].forward(wbase, *j, *m, acts.layer[i]);
    j = &acts.layer[i].j_out;
    m = &acts.layer[i].m_out;
  }
}

void Jmml::backward(const double* wbase, const Acts& acts, std::vector<Tensor>& gj_layer,
                    std::vector<Tensor>& gm_layer, double* gbase, Tensor& gj0,
                    Tensor& gm0) const {
  Tensor gj = std::move(gj_layer.back());
  Tensor gm = std::move(gm_layer.back());
  for (int i = static_cast<int>(layers.size()) - 1; i >= 0; --i) {
    Tensor gj_in, gm_in;
    layers[static_cast<size_t>(i)].backward(wbase, acts.layer[static_cast<size_t>(i)], gj, gm,
                                            gbase, gj_in, gm_in);
    if (i > 0) {
      gj = std::move(gj_in);
      gm = std::move(gm_in);
      if (!gj_layer[static_cast<size_t>(i - 1)].empty()) gj += gj_layer[static_cast<size_t>(i - 1)];
      if (!gm_layer[static_cast<size_t>(i - 1)].empty()) gm += gm_layer[static_cast<size_t>(i - 1)];
    } else {
      gj0 = std::move(gj_in);
      gm0 = std::move(gm_in);
    }
  }
}

DetectHead::DetectHead(nn::ParamStore& ps, const std::string& name, bool aggregate,
                       int in_channels, int channels, int k)
    : with_aggregate(aggregate), in_ch(in_channels), c(channels), k_joints(k) {
  if (aggregate) s_conv = Conv2d(ps, name + ".s_conv", in_channels, channels, 3, 1, 1);
  h1 = Conv2d(ps, name + ".h1", aggregate ? channels : in_channels, channels, 3, 1, 1);
  h2 = Conv2d(ps, name + ".h2", channels, k, 3, 1, 1);
}

void DetectHead::init(nn::ParamStore& ps, Rng& rng) const {
  if (with_aggregate) s_conv.init_he(ps, rng);
  h1.init_he(ps, rng);
  h2.init_he(ps, rng, 0.5);
}

Tensor DetectHead::forward(const double* wbase, const Tensor& in, Acts& acts) const {
  acts.in = in;
  acts.s = with_aggregate ? nn::relu(s_conv.forward(wbase, in)) : in;
  acts.a1 = nn::relu(h1.forward(wbase, acts.s));
  acts.out = h2.forward(wbase, acts.a1);
  return acts.out;
}

Tensor DetectHead::backward(const double* wbase, const Acts& acts, const Tensor& gy,
                            double* gbase) const {
  Tensor g1 = h2.backward(wbase, acts.a1, gy, gbase);
  g1 = nn::relu_backward(acts.a1, g1);
  Tensor gs = h1.backward(wbase, acts.s, g1, gbase);
  if (!with_aggregate) return gs;
  gs = nn::relu_backward(acts.s, gs);
  return s_conv.backward(wbase, acts.in, gs, gbase);
}

}  // namespace jmpose
