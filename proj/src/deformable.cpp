#include "jmpose/deformable.hpp"

#include <cmath>

namespace jmpose {

DeformableConv::DeformableConv(nn::ParamStore& ps, const std::string& name,
                               const DeformableKernelSpec& s)
    : spec(s) {
  w = ps.add(name + ".w", {s.out_channels, s.in_channels, s.kernel_size, s.kernel_size});
  b = ps.add(name + ".b", {s.out_channels});
}

void DeformableConv::init_he(nn::ParamStore& ps, Rng& rng, double gain) const {
  nn::init_normal(ps.wp(w), w.count,
                  gain * nn::he_scale(spec.in_channels * spec.taps()), rng);
  std::fill(ps.wp(b), ps.wp(b) + b.count, 0.0);
}

namespace {

// Bilinear corner data at (x, y) with zero padding: up to four (index,
// weight) pairs plus the weight derivatives for the offset gradient.
struct Corners {
  int idx[4];
  double wgt[4];
  double dwx[4];  // d(weight)/dx
  double dwy[4];
  int n = 0;
};

Corners corners_at(double x, double y, int h, int w) {
  Corners c;
  if (x <= -1 || x >= w || y <= -1 || y >= h) return c;
  int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  double tx = x - x0, ty = y - y0;
  const int xs[2] = {x0, x0 + 1};
  const int ys[2] = {y0, y0 + 1};
  const double wx[2] = {1 - tx, tx};
  const double wy[2] = {1 - ty, ty};
  const double dx[2] = {-1, 1};
  const double dy[2] = {-1, 1};
  for (int j = 0; j < 2; ++j)
    for (int i = 0; i < 2; ++i) {
      if (xs[i] < 0 || xs[i] >= w || ys[j] < 0 || ys[j] >= h) continue;
      c.idx[c.n] = ys[j] * w + xs[i];
      c.wgt[c.n] = wy[j] * wx[i];
      c.dwx[c.n] = wy[j] * dx[i];
      c.dwy[c.n] = dy[j] * wx[i];
      ++c.n;
    }
  return c;
}

void check_shapes(const DeformableKernelSpec& spec, const Tensor& m, const Tensor& jo,
                  const Tensor& jw) {
  if (m.ndim() != 3 || m.dim(0) != spec.in_channels)
    throw std::invalid_argument("deformable_conv: input channel mismatch");
  if (jo.dim(0) != spec.offset_channels() || jw.dim(0) != spec.weight_channels())
    throw std::invalid_argument("deformable_conv: offset/weight channel mismatch");
  if (jo.dim(1) != m.dim(1) || jo.dim(2) != m.dim(2) || jw.dim(1) != m.dim(1) ||
      jw.dim(2) != m.dim(2))
    throw std::invalid_argument("deformable_conv: spatial shape mismatch");
}

}  // namespace

Tensor DeformableConv::forward(const double* wbase, const Tensor& m, const Tensor& jo,
                               const Tensor& jw) const {
  check_shapes(spec, m, jo, jw);
  const int h = m.dim(1), iw = m.dim(2);
  const int cin = spec.in_channels, cout = spec.out_channels, k = spec.kernel_size;
  const int taps = spec.taps();
  Tensor y({cout, h, iw});
  const double* kw = wbase + w.off;
  const double* kb = wbase + b.off;
  std::vector<double> sample(static_cast<size_t>(cin));
  for (int py = 0; py < h; ++py) {
    for (int px = 0; px < iw; ++px) {
      const int p = py * iw + px;
      for (int q = 0; q < taps; ++q) {
        const int ky = q / k, kx = q % k;
        const double sx = px - spec.padding + kx * spec.dilation + jo.plane(2 * q)[p];
        const double sy = py - spec.padding + ky * spec.dilation + jo.plane(2 * q + 1)[p];
        Corners c = corners_at(sx, sy, h, iw);
        for (int ci = 0; ci < cin; ++ci) {
          const double* mp = m.plane(ci);
          double v = 0;
          for (int t = 0; t < c.n; ++t) v += c.wgt[t] * mp[c.idx[t]];
          sample[static_cast<size_t>(ci)] = v;
        }
        const double mod = jw.plane(q)[p];
        for (int co = 0; co < cout; ++co) {
          const double* wrow = kw + (static_cast<size_t>(co) * cin) * taps + q;
          double acc = 0;
          for (int ci = 0; ci < cin; ++ci) acc += wrow[static_cast<size_t>(ci) * taps] * sample[static_cast<size_t>(ci)];
          y.plane(co)[p] += mod * acc;
        }
      }
      for (int co = 0; co < cout; ++co) y.plane(co)[p] += kb[co];
    }
  }
  return y;
}

void DeformableConv::backward(const double* wbase, const Tensor& m, const Tensor& jo,
                              const Tensor& jw, const Tensor& gy, double* gbase, Tensor& gm,
                              Tensor& gjo, Tensor& gjw) const {
  check_shapes(spec, m, jo, jw);
  const int h = m.dim(1), iw = m.dim(2);
  const int cin = spec.in_channels, cout = spec.out_channels, k = spec.kernel_size;
  const int taps = spec.taps();
  gm = Tensor(m.shape());
  gjo = Tensor(jo.shape());
  gjw = Tensor(jw.shape());
  const double* kw = wbase + w.off;
  double* gkw = gbase + w.off;
  double* gkb = gbase + b.off;
  std::vector<double> sample(static_cast<size_t>(cin));
  std::vector<double> bgrad(static_cast<size_t>(cin));  // d(out)/d(sample_ci) pre-modulation
  for (int py = 0; py < h; ++py) {
    for (int px = 0; px < iw; ++px) {
      const int p = py * iw + px;
      for (int co = 0; co < cout; ++co) gkb[co] += gy.plane(co)[p];
      for (int q = 0; q < taps; ++q) {
        const int ky = q / k, kx = q % k;
        const double sx = px - spec.padding + kx * spec.dilation + jo.plane(2 * q)[p];
        const double sy = py - spec.padding + ky * spec.dilation + jo.plane(2 * q + 1)[p];
        Corners c = corners_at(sx, sy, h, iw);
        for (int ci = 0; ci < cin; ++ci) {
          const double* mp = m.plane(ci);
          double v = 0;
          for (int t = 0; t < c.n; ++t) v += c.wgt[t] * mp[c.idx[t]];
          sample[static_cast<size_t>(ci)] = v;
          bgrad[static_cast<size_t>(ci)] = 0;
        }
        const double mod = jw.plane(q)[p];
        double gmod = 0;
        for (int co = 0; co < cout; ++co) {
          const double gout = gy.plane(co)[p];
          if (gout == 0.0) continue;
          const double* wrow = kw + (static_cast<size_t>(co) * cin) * taps + q;
          double* gwrow = gkw + (static_cast<size_t>(co) * cin) * taps + q;
          for (int ci = 0; ci < cin; ++ci) {
            const double wv = wrow[static_cast<size_t>(ci) * taps];
            gwrow[static_cast<size_t>(ci) * taps] += gout * mod * sample[static_cast<size_t>(ci)];
            bgrad[static_cast<size_t>(ci)] += gout * wv;
            gmod += gout * wv * sample[static_cast<size_t>(ci)];
          }
        }
        gjw.plane(q)[p] += gmod;
        double gsx = 0, gsy = 0;
        for (int ci = 0; ci < cin; ++ci) {
          const double gs = mod * bgrad[static_cast<size_t>(ci)];  // d(loss)/d(sample_ci)
          if (gs == 0.0) continue;
          const double* mp = m.plane(ci);
          double* gmp = gm.plane(ci);
          for (int t = 0; t < c.n; ++t) {
            gmp[c.idx[t]] += gs * c.wgt[t];
            gsx += gs * c.dwx[t] * mp[c.idx[t]];
            gsy += gs * c.dwy[t] * mp[c.idx[t]];
          }
        }
        gjo.plane(2 * q)[p] += gsx;
        gjo.plane(2 * q + 1)[p] += gsy;
      }
    }
  }
}

Tensor deformable_conv_reference(const DeformableKernelSpec& spec, const double* kernel_w,
                                 const double* kernel_b, const Tensor& m, const Tensor& jo,
                                 const Tensor& jw) {
  const int h = m.dim(1), w = m.dim(2);
  const int k = spec.kernel_size;
  Tensor y({spec.out_channels, h, w});
  auto sample_zero = [&](int ci, double x, double yy) -> double {
    // Plain four-corner bilinear read with zero outside.
    int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(yy));
    double tx = x - x0, ty = yy - y0;
    auto px = [&](int yi, int xi) -> double {
      if (xi < 0 || xi >= w || yi < 0 || yi >= h) return 0.0;
      return m.at(ci, yi, xi);
    };
    return (1 - ty) * ((1 - tx) * px(y0, x0) + tx * px(y0, x0 + 1)) +
           ty * ((1 - tx) * px(y0 + 1, x0) + tx * px(y0 + 1, x0 + 1));
  };
  for (int co = 0; co < spec.out_channels; ++co)
    for (int py = 0; py < h; ++py)
      for (int px = 0; px < w; ++px) {
        double acc = kernel_b ? kernel_b[co] : 0.0;
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx) {
            const int q = ky * k + kx;
            double sx = px - spec.padding + kx * spec.dilation + jo.at(2 * q, py, px);
            double sy = py - spec.padding + ky * spec.dilation + jo.at(2 * q + 1, py, px);
            if (sx <= -1 || sx >= w || sy <= -1 || sy >= h) continue;
            for (int ci = 0; ci < spec.in_channels; ++ci)
              acc += kernel_w[((static_cast<size_t>(co) * spec.in_channels + ci) * k + ky) * k + kx] *
                     jw.at(q, py, px) * sample_zero(ci, sx, sy);
          }
        y.at(co, py, px) = acc;
      }
  return y;
}

}  // namespace jmpose
