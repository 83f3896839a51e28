#include "jmpose/nn.hpp"

#include <algorithm>
#include <cmath>

namespace jmpose::nn {

Param ParamStore::add(const std::string& name, std::vector<int> shape) {
  for (const auto& e : entries)
    if (e.name == name) throw std::invalid_argument("ParamStore: duplicate name " + name);
  Param p;
  p.off = w.size();
  p.shape = shape;
  p.count = 1;
  for (int d : shape) p.count *= d;
  w.resize(w.size() + static_cast<size_t>(p.count), 0.0);
  g.resize(w.size(), 0.0);
  entries.push_back({name, p});
  return p;
}

double he_scale(int fan_in) { return std::sqrt(2.0 / std::max(1, fan_in)); }

void init_normal(double* dst, int64_t n, double stddev, Rng& rng) {
  for (int64_t i = 0; i < n; ++i) dst[i] = stddev * rng.normal();
}

Conv2d::Conv2d(ParamStore& ps, const std::string& name, int in_c, int out_c, int k, int stride_,
               int pad_)
    : in_ch(in_c), out_ch(out_c), ks(k), stride(stride_), pad(pad_) {
  w = ps.add(name + ".w", {out_c, in_c, k, k});
  b = ps.add(name + ".b", {out_c});
}

void Conv2d::init_he(ParamStore& ps, Rng& rng, double gain) const {
  init_normal(ps.wp(w), w.count, gain * he_scale(in_ch * ks * ks), rng);
  std::fill(ps.wp(b), ps.wp(b) + b.count, 0.0);
}

Tensor Conv2d::forward(const double* wbase, const Tensor& x) const {
  if (x.ndim() != 3 || x.dim(0) != in_ch)
    throw std::invalid_argument("Conv2d: input channel mismatch");
  const int h = x.dim(1), iw = x.dim(2);
  const int oh = out_h(h), ow = out_w(iw);
  Tensor y({out_ch, oh, ow});
  const double* wv = wbase + w.off;
  const double* bv = wbase + b.off;
  for (int co = 0; co < out_ch; ++co) {
    double* yp = y.plane(co);
    std::fill(yp, yp + static_cast<size_t>(oh) * ow, bv[co]);
    for (int ci = 0; ci < in_ch; ++ci) {
      const double* xp = x.plane(ci);
      const double* wk = wv + (static_cast<size_t>(co) * in_ch + ci) * ks * ks;
      for (int ky = 0; ky < ks; ++ky) {
        for (int kx = 0; kx < ks; ++kx) {
          const double wval = wk[ky * ks + kx];
          if (wval == 0.0) continue;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= h) continue;
            double* yrow = yp + static_cast<size_t>(oy) * ow;
            const double* xrow = xp + static_cast<size_t>(iy) * iw;
            int ox0 = 0, ox1 = ow;
            // Clip the ox range so ix = ox*stride - pad + kx stays in bounds.
            while (ox0 < ow && ox0 * stride - pad + kx < 0) ++ox0;
            while (ox1 > ox0 && (ox1 - 1) * stride - pad + kx >= iw) --ox1;
            if (stride == 1) {
              const double* xs = xrow - pad + kx;
              for (int ox = ox0; ox < ox1; ++ox) yrow[ox] += wval * xs[ox];
            } else {
              for (int ox = ox0; ox < ox1; ++ox)
                yrow[ox] += wval * xrow[ox * stride - pad + kx];
            }
          }
        }
      }
    }
  }
  return y;
}

Tensor Conv2d::backward(const double* wbase, const Tensor& x, const Tensor& gy,
                        double* gbase) const {
  const int h = x.dim(1), iw = x.dim(2);
  const int oh = gy.dim(1), ow = gy.dim(2);
  Tensor gx({in_ch, h, iw});
  const double* wv = wbase + w.off;
  double* gw = gbase + w.off;
  double* gb = gbase + b.off;
  for (int co = 0; co < out_ch; ++co) {
    const double* gyp = gy.plane(co);
    double acc = 0;
    for (int i = 0; i < oh * ow; ++i) acc += gyp[i];
    gb[co] += acc;
    for (int ci = 0; ci < in_ch; ++ci) {
      const double* xp = x.plane(ci);
      double* gxp = gx.plane(ci);
      const size_t koff = (static_cast<size_t>(co) * in_ch + ci) * ks * ks;
      for (int ky = 0; ky < ks; ++ky) {
        for (int kx = 0; kx < ks; ++kx) {
          const double wval = wv[koff + ky * ks + kx];
          double wacc = 0;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= h) continue;
            const double* gyrow = gyp + static_cast<size_t>(oy) * ow;
            const double* xrow = xp + static_cast<size_t>(iy) * iw;
            double* gxrow = gxp + static_cast<size_t>(iy) * iw;
            int ox0 = 0, ox1 = ow;
            while (ox0 < ow && ox0 * stride - pad + kx < 0) ++ox0;
            while (ox1 > ox0 && (ox1 - 1) * stride - pad + kx >= iw) --ox1;
            if (stride == 1) {
              const double* xs = xrow - pad + kx;
              double* gxs = gxrow - pad + kx;
              for (int ox = ox0; ox < ox1; ++ox) {
                wacc += gyrow[ox] * xs[ox];
                gxs[ox] += wval * gyrow[ox];
              }
            } else {
              for (int ox = ox0; ox < ox1; ++ox) {
                const int ix = ox * stride - pad + kx;
                wacc += gyrow[ox] * xrow[ix];
                gxrow[ix] += wval * gyrow[ox];
              }
            }
          }
          gw[koff + ky * ks + kx] += wacc;
        }
      }
    }
  }
  return gx;
}

Linear::Linear(ParamStore& ps, const std::string& name, int in_d, int out_d)
    : in_dim(in_d), out_dim(out_d) {
  w = ps.add(name + ".w", {out_d, in_d});
  b = ps.add(name + ".b", {out_d});
}

void Linear::init_he(ParamStore& ps, Rng& rng, double gain) const {
  init_normal(ps.wp(w), w.count, gain * he_scale(in_dim), rng);
  std::fill(ps.wp(b), ps.wp(b) + b.count, 0.0);
}

Tensor Linear::forward(const double* wbase, const Tensor& x) const {
  if (x.ndim() != 2 || x.dim(1) != in_dim) throw std::invalid_argument("Linear: shape mismatch");
  const int bdim = x.dim(0);
  Tensor y({bdim, out_dim});
  const double* wv = wbase + w.off;
  const double* bv = wbase + b.off;
  for (int i = 0; i < bdim; ++i) {
    const double* xr = x.ptr() + static_cast<size_t>(i) * in_dim;
    double* yr = y.ptr() + static_cast<size_t>(i) * out_dim;
    for (int o = 0; o < out_dim; ++o) {
      const double* wr = wv + static_cast<size_t>(o) * in_dim;
      double acc = bv[o];
      for (int k = 0; k < in_dim; ++k) acc += wr[k] * xr[k];
      yr[o] = acc;
    }
  }
  return y;
}

Tensor Linear::backward(const double* wbase, const Tensor& x, const Tensor& gy,
                        double* gbase) const {
  const int bdim = x.dim(0);
  Tensor gx({bdim, in_dim});
  const double* wv = wbase + w.off;
  // gbase == nullptr treats the parameters as frozen (input grads only).
  double* gw = gbase ? gbase + w.off : nullptr;
  double* gb = gbase ? gbase + b.off : nullptr;
  for (int i = 0; i < bdim; ++i) {
    const double* xr = x.ptr() + static_cast<size_t>(i) * in_dim;
    const double* gyr = gy.ptr() + static_cast<size_t>(i) * out_dim;
    double* gxr = gx.ptr() + static_cast<size_t>(i) * in_dim;
    for (int o = 0; o < out_dim; ++o) {
      const double g = gyr[o];
      if (g == 0.0) continue;
      const double* wr = wv + static_cast<size_t>(o) * in_dim;
      if (gbase) {
        double* gwr = gw + static_cast<size_t>(o) * in_dim;
        gb[o] += g;
        for (int k = 0; k < in_dim; ++k) {
          gwr[k] += g * xr[k];
          gxr[k] += g * wr[k];
        }
      } else {
        for (int k = 0; k < in_dim; ++k) gxr[k] += g * wr[k];
      }
    }
  }
  return gx;
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (int64_t i = 0; i < y.size(); ++i) y[i] = y[i] > 0 ? y[i] : 0.0;
  return y;
}

Tensor relu_backward(const Tensor& y, const Tensor& gy) {
  Tensor gx = gy;
  for (int64_t i = 0; i < gx.size(); ++i)
    if (y[i] <= 0) gx[i] = 0.0;
  return gx;
}

Tensor tanh_fwd(const Tensor& x) {
  Tensor y = x;
  for (int64_t i = 0; i < y.size(); ++i) y[i] = std::tanh(y[i]);
  return y;
}

Tensor tanh_backward(const Tensor& y, const Tensor& gy) {
  Tensor gx = gy;
  for (int64_t i = 0; i < gx.size(); ++i) gx[i] *= 1.0 - y[i] * y[i];
  return gx;
}

Tensor sigmoid(const Tensor& x) {
  Tensor y = x;
  for (int64_t i = 0; i < y.size(); ++i) y[i] = 1.0 / (1.0 + std::exp(-y[i]));
  return y;
}

Tensor sigmoid_backward(const Tensor& y, const Tensor& gy) {
  Tensor gx = gy;
  for (int64_t i = 0; i < gx.size(); ++i) gx[i] *= y[i] * (1.0 - y[i]);
  return gx;
}

Tensor softmax_rows(const Tensor& s) {
  const int n = s.dim(0), m = s.dim(1);
  Tensor p({n, m});
  for (int i = 0; i < n; ++i) {
    const double* sr = s.ptr() + static_cast<size_t>(i) * m;
    double* pr = p.ptr() + static_cast<size_t>(i) * m;
    double mx = sr[0];
    for (int j = 1; j < m; ++j) mx = std::max(mx, sr[j]);
    double sum = 0;
    for (int j = 0; j < m; ++j) {
      pr[j] = std::exp(sr[j] - mx);
      sum += pr[j];
    }
    const double inv = 1.0 / sum;
    for (int j = 0; j < m; ++j) pr[j] *= inv;
  }
  return p;
}

Tensor softmax_rows_backward(const Tensor& p, const Tensor& gp) {
  const int n = p.dim(0), m = p.dim(1);
  Tensor gs({n, m});
  for (int i = 0; i < n; ++i) {
    const double* pr = p.ptr() + static_cast<size_t>(i) * m;
    const double* gr = gp.ptr() + static_cast<size_t>(i) * m;
    double* out = gs.ptr() + static_cast<size_t>(i) * m;
    double dotv = 0;
    for (int j = 0; j < m; ++j) dotv += pr[j] * gr[j];
    for (int j = 0; j < m; ++j) out[j] = pr[j] * (gr[j] - dotv);
  }
  return gs;
}

Tensor global_avg_pool(const Tensor& x) {
  const int c = x.dim(0);
  const int64_t hw = static_cast<int64_t>(x.dim(1)) * x.dim(2);
  Tensor y({c});
  for (int ch = 0; ch < c; ++ch) {
    const double* p = x.plane(ch);
    double acc = 0;
    for (int64_t i = 0; i < hw; ++i) acc += p[i];
    y[ch] = acc / static_cast<double>(hw);
  }
  return y;
}

Tensor global_avg_pool_backward(const std::vector<int>& x_shape, const Tensor& gc) {
  Tensor gx(x_shape);
  const int c = x_shape[0];
  const int64_t hw = static_cast<int64_t>(x_shape[1]) * x_shape[2];
  for (int ch = 0; ch < c; ++ch) {
    double v = gc[ch] / static_cast<double>(hw);
    double* p = gx.plane(ch);
    for (int64_t i = 0; i < hw; ++i) p[i] = v;
  }
  return gx;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2))
    throw std::invalid_argument("concat_channels: spatial shape mismatch");
  Tensor out({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
  std::copy(a.ptr(), a.ptr() + a.size(), out.ptr());
  std::copy(b.ptr(), b.ptr() + b.size(), out.ptr() + a.size());
  return out;
}

void split_channels(const Tensor& ab, Tensor& ga, Tensor& gb) {
  std::copy(ab.ptr(), ab.ptr() + ga.size(), ga.ptr());
  std::copy(ab.ptr() + ga.size(), ab.ptr() + ga.size() + gb.size(), gb.ptr());
}

double fd_rel_err(double analytic, double numeric) {
  return std::fabs(analytic - numeric) / std::max(1e-6, std::fabs(analytic) + std::fabs(numeric));
}

namespace {

template <typename Get, typename Set>
GradCheckReport fd_check(const std::function<double()>& loss, int64_t n,
                         const double* analytic, int64_t max_checks, Rng& rng, double h,
                         const Get& get, const Set& set) {
  GradCheckReport rep;
  std::vector<int64_t> idx;
  if (max_checks >= n) {
    idx.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  } else {
    for (int64_t i = 0; i < max_checks; ++i)
      idx.push_back(rng.uniform_int(static_cast<int>(n)));
  }
  for (int64_t i : idx) {
    double orig = get(i);
    double step = h * std::max(1.0, std::fabs(orig));
    set(i, orig + step);
    double lp = loss();
    set(i, orig - step);
    double lm = loss();
    set(i, orig);
    double numeric = (lp - lm) / (2 * step);
    rep.max_rel_err = std::max(rep.max_rel_err, fd_rel_err(analytic[i], numeric));
    ++rep.checked;
  }
  return rep;
}

}  // namespace

GradCheckReport check_param_grads(const std::function<double()>& loss, ParamStore& ps,
                                  const std::vector<double>& analytic, int64_t max_checks,
                                  Rng& rng, double h) {
  return fd_check(
      loss, ps.total(), analytic.data(), max_checks, rng, h,
      [&](int64_t i) { return ps.w[static_cast<size_t>(i)]; },
      [&](int64_t i, double v) { ps.w[static_cast<size_t>(i)] = v; });
}

GradCheckReport check_tensor_grads(const std::function<double()>& loss, Tensor& x,
                                   const Tensor& analytic, int64_t max_checks, Rng& rng,
                                   double h) {
  return fd_check(
      loss, x.size(), analytic.ptr(), max_checks, rng, h,
      [&](int64_t i) { return x[i]; }, [&](int64_t i, double v) { x[i] = v; });
}

}  // namespace jmpose::nn
