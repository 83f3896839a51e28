#include "jmpose/mi.hpp"

#include <cmath>

namespace jmpose::mi {

namespace {
constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5*ln(2*pi)
constexpr double kLogVarClamp = 8.0;
}  // namespace

Mlp::Mlp(nn::ParamStore& ps, const std::string& name, int in, int hidden, int out) {
  l1 = nn::Linear(ps, name + ".l1", in, hidden);
  l2 = nn::Linear(ps, name + ".l2", hidden, hidden);
  l3 = nn::Linear(ps, name + ".l3", hidden, out);
}

void Mlp::init(nn::ParamStore& ps, Rng& rng) const {
  l1.init_he(ps, rng);
  l2.init_he(ps, rng);
  l3.init_he(ps, rng, 0.5);
}

Tensor Mlp::forward(const double* wbase, const Tensor& x, Acts& acts) const {
  acts.x = x;
  acts.a1 = nn::tanh_fwd(l1.forward(wbase, x));
  acts.a2 = nn::tanh_fwd(l2.forward(wbase, acts.a1));
  acts.out = l3.forward(wbase, acts.a2);
  return acts.out;
}

Tensor Mlp::backward(const double* wbase, const Acts& acts, const Tensor& gy,
                     double* gbase) const {
  Tensor g2 = l3.backward(wbase, acts.a2, gy, gbase);
  g2 = nn::tanh_backward(acts.a2, g2);
  Tensor g1 = l2.backward(wbase, acts.a1, g2, gbase);
  g1 = nn::tanh_backward(acts.a1, g1);
  return l1.backward(wbase, acts.x, g1, gbase);
}

void check_batch(const Tensor& x, const Tensor& y) {
  if (x.ndim() != 2 || y.ndim() != 2) throw std::invalid_argument("mi: expected (B,D) batches");
  if (x.dim(0) != y.dim(0)) throw std::invalid_argument("mi: batches must be aligned");
  if (x.dim(0) < 2)
    throw std::invalid_argument("mi: contrastive/leave-one-out bounds need batch >= 2");
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  const int n = a.dim(0), da = a.dim(1), db = b.dim(1);
  Tensor out({n, da + db});
  for (int i = 0; i < n; ++i) {
    std::copy(a.ptr() + static_cast<size_t>(i) * da, a.ptr() + static_cast<size_t>(i + 1) * da,
              out.ptr() + static_cast<size_t>(i) * (da + db));
    std::copy(b.ptr() + static_cast<size_t>(i) * db, b.ptr() + static_cast<size_t>(i + 1) * db,
              out.ptr() + static_cast<size_t>(i) * (da + db) + da);
  }
  return out;
}

ContrastiveLowerBound::ContrastiveLowerBound(nn::ParamStore& ps, const std::string& name, int dx,
                                             int dy, int hidden, int emb_dim)
    : emb(emb_dim) {
  g = Mlp(ps, name + ".g", dx, hidden, emb_dim);
  h = Mlp(ps, name + ".h", dy, hidden, emb_dim);
}

void ContrastiveLowerBound::init(nn::ParamStore& ps, Rng& rng) const {
  g.init(ps, rng);
  h.init(ps, rng);
}

namespace {

// Shared forward for the contrastive bound. Returns the bound and fills
// dbound/dS (B x B) for the requested backward paths.
struct NceState {
  Mlp::Acts ga, ha;
  Tensor ge, he;   // embeddings (B, emb)
  Tensor scores;   // (B, B): f(x_i, y_j)
  Tensor dscores;  // d(bound)/d(scores)
  double bound = 0;
};

void nce_forward(const ContrastiveLowerBound& c, const double* wbase, const Tensor& x,
                 const Tensor& y, NceState& st) {
  const int b = x.dim(0);
  st.ge = c.g.forward(wbase, x, st.ga);
  st.he = c.h.forward(wbase, y, st.ha);
  st.scores = Tensor({b, b});
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < b; ++j) {
      const double* gi = st.ge.ptr() + static_cast<size_t>(i) * c.emb;
      const double* hj = st.he.ptr() + static_cast<size_t>(j) * c.emb;
      double acc = 0;
      for (int k = 0; k < c.emb; ++k) acc += gi[k] * hj[k];
      st.scores.at(i, j) = acc;
    }
  // bound = mean_i [ S_ii - log(mean_j exp(S_ij)) ]
  st.dscores = Tensor({b, b});
  double total = 0;
  for (int i = 0; i < b; ++i) {
    const double* sr = st.scores.ptr() + static_cast<size_t>(i) * b;
    double mx = sr[0];
    for (int j = 1; j < b; ++j) mx = std::max(mx, sr[j]);
    double sum = 0;
    for (int j = 0; j < b; ++j) sum += std::exp(sr[j] - mx);
    total += sr[i] - (mx + std::log(sum / b));
    double* dr = st.dscores.ptr() + static_cast<size_t>(i) * b;
    for (int j = 0; j < b; ++j) dr[j] = -std::exp(sr[j] - mx) / sum / b;
    dr[i] += 1.0 / b;
  }
  st.bound = total / b;
}

}  // namespace

double ContrastiveLowerBound::estimate(const nn::ParamStore& ps, const Tensor& x,
                                       const Tensor& y, Tensor* gx, Tensor* gy) const {
  check_batch(x, y);
  NceState st;
  nce_forward(*this, ps.w.data(), x, y, st);
  if (gx || gy) {
    const int b = x.dim(0);
    Tensor dge({b, emb}), dhe({b, emb});
    for (int i = 0; i < b; ++i)
      for (int j = 0; j < b; ++j) {
        const double d = st.dscores.at(i, j);
        if (d == 0.0) continue;
        for (int k = 0; k < emb; ++k) {
          dge.at(i, k) += d * st.he.at(j, k);
          dhe.at(j, k) += d * st.ge.at(i, k);
        }
      }
    if (gx) *gx += g.backward(ps.w.data(), st.ga, dge, nullptr);
    if (gy) *gy += h.backward(ps.w.data(), st.ha, dhe, nullptr);
  }
  return st.bound;
}

double ContrastiveLowerBound::critic_grads(const nn::ParamStore& ps, const Tensor& x,
                                           const Tensor& y, double* gbase) const {
  check_batch(x, y);
  NceState st;
  nce_forward(*this, ps.w.data(), x, y, st);
  const int b = x.dim(0);
  Tensor dge({b, emb}), dhe({b, emb});
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < b; ++j) {
      const double d = -st.dscores.at(i, j);  // minimize -bound
      if (d == 0.0) continue;
      for (int k = 0; k < emb; ++k) {
        dge.at(i, k) += d * st.he.at(j, k);
        dhe.at(j, k) += d * st.ge.at(i, k);
      }
    }
  g.backward(ps.w.data(), st.ga, dge, gbase);
  h.backward(ps.w.data(), st.ha, dhe, gbase);
  return st.bound;
}

GaussianUpperBound::GaussianUpperBound(nn::ParamStore& ps, const std::string& name, int dx,
                                       int dy_, int hidden)
    : dy(dy_) {
  net = Mlp(ps, name + ".q", dx, hidden, 2 * dy_);
}

void GaussianUpperBound::init(nn::ParamStore& ps, Rng& rng) const { net.init(ps, rng); }

namespace {

struct QState {
  Mlp::Acts acts;
  Tensor out;      // (B, 2*dy): mean then logvar
  Tensor logq;     // (B, B): log q(y_i | x_j)
};

double clamped_lv(double lv) { return std::clamp(lv, -kLogVarClamp, kLogVarClamp); }

void q_forward(const GaussianUpperBound& u, const double* wbase, const Tensor& x,
               const Tensor& y, QState& st) {
  const int b = x.dim(0), dy = u.dy;
  st.out = u.net.forward(wbase, x, st.acts);
  st.logq = Tensor({b, b});
  for (int i = 0; i < b; ++i) {
    const double* yi = y.ptr() + static_cast<size_t>(i) * dy;
    for (int j = 0; j < b; ++j) {
      const double* mu = st.out.ptr() + static_cast<size_t>(j) * 2 * dy;
      const double* lv = mu + dy;
      double acc = 0;
      for (int k = 0; k < dy; ++k) {
        double l = clamped_lv(lv[k]);
        double diff = yi[k] - mu[k];
        acc += -kHalfLog2Pi - 0.5 * l - 0.5 * diff * diff * std::exp(-l);
      }
      st.logq.at(i, j) = acc;
    }
  }
}

}  // namespace

double GaussianUpperBound::estimate(const nn::ParamStore& ps, const Tensor& x, const Tensor& y,
                                    Tensor* gx, Tensor* gy) const {
  check_batch(x, y);
  if (y.dim(1) != dy) throw std::invalid_argument("GaussianUpperBound: y dimension mismatch");
  const int b = x.dim(0);
  QState st;
  q_forward(*this, ps.w.data(), x, y, st);

  // bound = mean_i [ logq_ii - logsumexp_{j!=i}(logq_ij) + log(B-1) ]
  Tensor dlogq({b, b});
  double total = 0;
  for (int i = 0; i < b; ++i) {
    double mx = -1e300;
    for (int j = 0; j < b; ++j)
      if (j != i) mx = std::max(mx, st.logq.at(i, j));
    double sum = 0;
    for (int j = 0; j < b; ++j)
      if (j != i) sum += std::exp(st.logq.at(i, j) - mx);
    total += st.logq.at(i, i) - (mx + std::log(sum / (b - 1)));
    dlogq.at(i, i) += 1.0 / b;
    for (int j = 0; j < b; ++j)
      if (j != i) dlogq.at(i, j) -= std::exp(st.logq.at(i, j) - mx) / sum / b;
  }
  double bound = total / b;

  if (gx || gy) {
    Tensor dout({b, 2 * dy});
    for (int i = 0; i < b; ++i) {
      const double* yi = y.ptr() + static_cast<size_t>(i) * dy;
      for (int j = 0; j < b; ++j) {
        const double d = dlogq.at(i, j);
        if (d == 0.0) continue;
        const double* mu = st.out.ptr() + static_cast<size_t>(j) * 2 * dy;
        const double* lv = mu + dy;
        double* dmu = dout.ptr() + static_cast<size_t>(j) * 2 * dy;
        double* dlv = dmu + dy;
        for (int k = 0; k < dy; ++k) {
          double l = clamped_lv(lv[k]);
          double invv = std::exp(-l);
          double diff = yi[k] - mu[k];
          dmu[k] += d * diff * invv;
          if (std::fabs(lv[k]) < kLogVarClamp)
            dlv[k] += d * (-0.5 + 0.5 * diff * diff * invv);
          if (gy) gy->at(i, k) += d * (-diff * invv);
        }
      }
    }
    if (gx) *gx += net.backward(ps.w.data(), st.acts, dout, nullptr);
  }
  return bound;
}

double GaussianUpperBound::nll_grads(const nn::ParamStore& ps, const Tensor& x, const Tensor& y,
                                     double* gbase) const {
  check_batch(x, y);
  const int b = x.dim(0);
  QState st;
  q_forward(*this, ps.w.data(), x, y, st);
  double nll = 0;
  Tensor dout({b, 2 * dy});
  for (int i = 0; i < b; ++i) {
    nll -= st.logq.at(i, i) / b;
    const double* yi = y.ptr() + static_cast<size_t>(i) * dy;
    const double* mu = st.out.ptr() + static_cast<size_t>(i) * 2 * dy;
    const double* lv = mu + dy;
    double* dmu = dout.ptr() + static_cast<size_t>(i) * 2 * dy;
    double* dlv = dmu + dy;
    const double d = -1.0 / b;  // d(nll)/d(logq_ii)
    for (int k = 0; k < dy; ++k) {
      double l = clamped_lv(lv[k]);
      double invv = std::exp(-l);
      double diff = yi[k] - mu[k];
      dmu[k] += d * diff * invv;
      if (std::fabs(lv[k]) < kLogVarClamp) dlv[k] += d * (-0.5 + 0.5 * diff * diff * invv);
    }
  }
  net.backward(ps.w.data(), st.acts, dout, gbase);
  return nll;
}

ConditionalUpperBound::ConditionalUpperBound(nn::ParamStore& ps, const std::string& name, int dx,
                                             int dy, int dz, int hidden) {
  q_yz = GaussianUpperBound(ps, name + ".q_yz", dx, dy + dz, hidden);
  q_z = GaussianUpperBound(ps, name + ".q_z", dx, dz, hidden);
}

void ConditionalUpperBound::init(nn::ParamStore& ps, Rng& rng) const {
  q_yz.init(ps, rng);
  q_z.init(ps, rng);
}

double ConditionalUpperBound::estimate(const nn::ParamStore& ps, const Tensor& x, const Tensor& y,
                                       const Tensor& z, Tensor* gx, Tensor* gy, Tensor* gz) const {
  const int b = x.dim(0), dy = y.dim(1), dz = z.dim(1);
  Tensor yz = concat_cols(y, z);
  Tensor gyz;
  if (gy || gz) gyz = Tensor({b, dy + dz});
  double full = q_yz.estimate(ps, x, yz, gx, (gy || gz) ? &gyz : nullptr);

  Tensor gz_sub;
  if (gz) gz_sub = Tensor({b, dz});
  // Subtracted term: negate its contributions.
  Tensor gx_sub;
  if (gx) gx_sub = Tensor({b, x.dim(1)});
  double marg = q_z.estimate(ps, x, z, gx ? &gx_sub : nullptr, gz ? &gz_sub : nullptr);

  if (gx)
    for (int64_t i = 0; i < gx->size(); ++i) (*gx)[i] -= gx_sub[i];
  if (gy || gz)
    for (int i = 0; i < b; ++i)
      for (int k = 0; k < dy + dz; ++k) {
        double v = gyz.at(i, k);
        if (k < dy) {
          if (gy) gy->at(i, k) += v;
        } else if (gz) {
          gz->at(i, k - dy) += v;
        }
      }
  if (gz)
    for (int64_t i = 0; i < gz->size(); ++i) (*gz)[i] -= gz_sub[i];
  return full - marg;
}

double ConditionalUpperBound::nll_grads(const nn::ParamStore& ps, const Tensor& x,
                                        const Tensor& y, const Tensor& z, double* gbase) const {
  Tensor yz = concat_cols(y, z);
  double a = q_yz.nll_grads(ps, x, yz, gbase);
  double b2 = q_z.nll_grads(ps, x, z, gbase);
  return a + b2;
}

}  // namespace jmpose::mi
