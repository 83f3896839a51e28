#pragma once

#include <memory>

#include "jmpose/mi.hpp"

namespace jmpose {

/// The three mutual-information terms consumed by the orthogonality loss.
/// Each call returns the term value in nats and, when the grad pointers are
/// non-null, adds the term's gradient w.r.t. the pooled feature batches
/// (estimator parameters frozen). Tests may substitute fixed-value mocks.
class MiTerms {
 public:
  virtual ~MiTerms() = default;
  /// I(M; J) upper bound (minimized: relevancy).
  virtual double upper_mj(const Tensor& m, const Tensor& j, Tensor* gm, Tensor* gj) const = 0;
  /// I(J; H) lower bound (maximized: complement).
  virtual double lower_jh(const Tensor& j, const Tensor& h, Tensor* gj, Tensor* gh) const = 0;
  /// I(H; J | M) upper bound (minimized: redundancy).
  virtual double cond_hj_given_m(const Tensor& h, const Tensor& j, const Tensor& m, Tensor* gh,
                                 Tensor* gj, Tensor* gm) const = 0;
};

struct IoLossResult {
  double loss = 0;  // upper - lower + cond_raw; the differentiable value
  double upper = 0, lower = 0, cond_raw = 0, cond_clamped = 0;
  Tensor gm, gj, gh;  // (B,D) feature gradients of `loss` when requested

  /// Value for logs/reports: conditional term clamped at zero.
  double reported() const { return upper - lower + cond_clamped; }
};

/// Assembles the per-layer orthogonality loss
///   L = upper(M, J) - lower(J, H) + cond(H; J | M)
/// on pooled (B,D) batches. Throws when B < 2.
IoLossResult io_loss_pooled(const Tensor& m, const Tensor& j, const Tensor& h,
                            const MiTerms& terms, bool want_grads);

/// Convenience wrapper on a batch of feature maps: global-average-pools each
/// (C,H,W) map per channel into one row, then calls io_loss_pooled.
IoLossResult io_loss(const std::vector<const Tensor*>& m_maps,
                     const std::vector<const Tensor*>& j_maps,
                     const std::vector<const Tensor*>& h_maps, const MiTerms& terms,
                     bool want_grads);

/// Production estimator set for one layer: three disjoint parameter groups in
/// a shared store. Feature-gradient calls never touch store.g; the estimator
/// training objectives accumulate into a caller-provided buffer.
class VariationalMiTerms : public MiTerms {
 public:
  VariationalMiTerms() = default;
  VariationalMiTerms(nn::ParamStore& ps, const std::string& name, int dm, int dj, int dh,
                     int hidden = 48);
  void init(nn::ParamStore& ps, Rng& rng) const;

  void attach(const nn::ParamStore& ps) { ps_ = &ps; }

  double upper_mj(const Tensor& m, const Tensor& j, Tensor* gm, Tensor* gj) const override;
  double lower_jh(const Tensor& j, const Tensor& h, Tensor* gj, Tensor* gh) const override;
  double cond_hj_given_m(const Tensor& h, const Tensor& j, const Tensor& m, Tensor* gh,
                         Tensor* gj, Tensor* gm) const override;

  /// One evaluation of the estimators' own objectives (critic: maximize its
  /// bound; predictors: likelihood on positives); accumulates parameter
  /// gradients into gbase and returns the summed objective.
  double estimator_grads(const Tensor& m, const Tensor& j, const Tensor& h, double* gbase) const;

 private:
  const nn::ParamStore* ps_ = nullptr;
  mi::GaussianUpperBound upper_;
  mi::ContrastiveLowerBound lower_;
  mi::ConditionalUpperBound cond_;
};

}  // namespace jmpose
