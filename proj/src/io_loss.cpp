#include "jmpose/io_loss.hpp"

#include <algorithm>

namespace jmpose {

IoLossResult io_loss_pooled(const Tensor& m, const Tensor& j, const Tensor& h,
                            const MiTerms& terms, bool want_grads) {
  mi::check_batch(m, j);
  mi::check_batch(j, h);
  IoLossResult r;
  if (want_grads) {
    r.gm = Tensor(m.shape());
    r.gj = Tensor(j.shape());
    r.gh = Tensor(h.shape());
  }
  Tensor* gm = want_grads ? &r.gm : nullptr;
  Tensor* gj = want_grads ? &r.gj : nullptr;
  Tensor* gh = want_grads ? &r.gh : nullptr;

  r.upper = terms.upper_mj(m, j, gm, gj);

  // The complement term is maximized, so it enters with a negative sign.
  if (want_grads) {
    Tensor gj_low(j.shape()), gh_low(h.shape());
    r.lower = terms.lower_jh(j, h, &gj_low, &gh_low);
    for (int64_t i = 0; i < gj_low.size(); ++i) r.gj[i] -= gj_low[i];
    for (int64_t i = 0; i < gh_low.size(); ++i) r.gh[i] -= gh_low[i];
  } else {
    r.lower = terms.lower_jh(j, h, nullptr, nullptr);
  }

  r.cond_raw = terms.cond_hj_given_m(h, j, m, gh, gj, gm);
  r.cond_clamped = std::max(0.0, r.cond_raw);
  r.loss = r.upper - r.lower + r.cond_raw;
  return r;
}

IoLossResult io_loss(const std::vector<const Tensor*>& m_maps,
                     const std::vector<const Tensor*>& j_maps,
                     const std::vector<const Tensor*>& h_maps, const MiTerms& terms,
                     bool want_grads) {
  if (m_maps.size() != j_maps.size() || j_maps.size() != h_maps.size())
    throw std::invalid_argument("io_loss: batch size mismatch across features");
  const int b = static_cast<int>(m_maps.size());
  if (b < 2) throw std::invalid_argument("io_loss: batch must be >= 2");
  auto pool_all = [&](const std::vector<const Tensor*>& maps) {
    const int d = maps[0]->dim(0);
    Tensor out({b, d});
    for (int i = 0; i < b; ++i) {
      Tensor row = nn::global_avg_pool(*maps[static_cast<size_t>(i)]);
      std::copy(row.ptr(), row.ptr() + d, out.ptr() + static_cast<size_t>(i) * d);
    }
    return out;
  };
  return io_loss_pooled(pool_all(m_maps), pool_all(j_maps), pool_all(h_maps), terms, want_grads);
}

VariationalMiTerms::VariationalMiTerms(nn::ParamStore& ps, const std::string& name, int dm,
                                       int dj, int dh, int hidden) {
  upper_ = mi::GaussianUpperBound(ps, name + ".upper_mj", dm, dj, hidden);
  lower_ = mi::ContrastiveLowerBound(ps, name + ".lower_jh", dj, dh, hidden);
  cond_ = mi::ConditionalUpperBound(ps, name + ".cond", dh, dj, dm, hidden);
  ps_ = &ps;
}

void VariationalMiTerms::init(nn::ParamStore& ps, Rng& rng) const {
  upper_.init(ps, rng);
  lower_.init(ps, rng);
  cond_.init(ps, rng);
}

double VariationalMiTerms::upper_mj(const Tensor& m, const Tensor& j, Tensor* gm,
                                    Tensor* gj) const {
  return upper_.estimate(*ps_, m, j, gm, gj);
}

double VariationalMiTerms::lower_jh(const Tensor& j, const Tensor& h, Tensor* gj,
                                    Tensor* gh) const {
  return lower_.estimate(*ps_, j, h, gj, gh);
}

double VariationalMiTerms::cond_hj_given_m(const Tensor& h, const Tensor& j, const Tensor& m,
                                           Tensor* gh, Tensor* gj, Tensor* gm) const {
  return cond_.estimate(*ps_, h, j, m, gh, gj, gm);
}

double VariationalMiTerms::estimator_grads(const Tensor& m, const Tensor& j, const Tensor& h,
                                           double* gbase) const {
  double obj = 0;
  obj += upper_.nll_grads(*ps_, m, j, gbase);
  obj += lower_.critic_grads(*ps_, j, h, gbase);
  obj += cond_.nll_grads(*ps_, h, j, m, gbase);
  return obj;
}

}  // namespace jmpose
