#pragma once

#include "jmpose/nn.hpp"

namespace jmpose::mi {

/// Two-hidden-layer tanh MLP. `backward` with gbase == nullptr computes input
/// gradients through frozen parameters only.
struct Mlp {
  nn::Linear l1, l2, l3;

  Mlp() = default;
  Mlp(nn::ParamStore& ps, const std::string& name, int in, int hidden, int out);
  void init(nn::ParamStore& ps, Rng& rng) const;

  struct Acts {
    Tensor x, a1, a2, out;
  };

  Tensor forward(const double* wbase, const Tensor& x, Acts& acts) const;
  Tensor backward(const double* wbase, const Acts& acts, const Tensor& gy, double* gbase) const;
};

/// Contrastive mutual-information lower bound over in-batch negatives with a
/// separable critic f(x, y) = <g(x), h(y)>. The bound saturates near ln B.
///
/// All estimates are in nats. Throws when the batch has fewer than 2 rows.
struct ContrastiveLowerBound {
  Mlp g, h;
  int emb = 16;

  ContrastiveLowerBound() = default;
  ContrastiveLowerBound(nn::ParamStore& ps, const std::string& name, int dx, int dy,
                        int hidden = 48, int emb_dim = 16);
  void init(nn::ParamStore& ps, Rng& rng) const;

  /// Bound value; adds d(bound)/d(x,y) into gx/gy when non-null (critic
  /// parameters frozen).
  double estimate(const nn::ParamStore& ps, const Tensor& x, const Tensor& y, Tensor* gx,
                  Tensor* gy) const;
  /// One training objective evaluation (maximize the bound): accumulates
  /// d(-bound)/d(params) into gbase; features are treated as constants.
  double critic_grads(const nn::ParamStore& ps, const Tensor& x, const Tensor& y,
                      double* gbase) const;
};

/// Conditional-likelihood upper bound: a diagonal-Gaussian predictor
/// q(y|x) = N(mu(x), diag(exp(lv(x)))) trained by likelihood on positive
/// pairs; the bound contrasts each positive against the leave-one-out mixture
/// (1/(B-1)) sum_{j != i} q(y_i | x_j), an in-batch estimate of the marginal.
struct GaussianUpperBound {
  Mlp net;  // x -> (mean dy, logvar dy)
  int dy = 0;

  GaussianUpperBound() = default;
  GaussianUpperBound(nn::ParamStore& ps, const std::string& name, int dx, int dy_,
                     int hidden = 48);
  void init(nn::ParamStore& ps, Rng& rng) const;

  double estimate(const nn::ParamStore& ps, const Tensor& x, const Tensor& y, Tensor* gx,
                  Tensor* gy) const;
  /// Mean negative log likelihood of the positive pairs; accumulates its
  /// parameter gradient (minimize) into gbase.
  double nll_grads(const nn::ParamStore& ps, const Tensor& x, const Tensor& y,
                   double* gbase) const;
};

/// Upper bound on I(X;Y|Z) by the difference I(X; Y(+)Z) - I(X; Z), each term
/// estimated with its own GaussianUpperBound. Values are reported clamped at
/// zero; the raw value (and its gradient) is what enters the loss.
struct ConditionalUpperBound {
  GaussianUpperBound q_yz;  // predicts concat(y, z) from x
  GaussianUpperBound q_z;   // predicts z from x

  ConditionalUpperBound() = default;
  ConditionalUpperBound(nn::ParamStore& ps, const std::string& name, int dx, int dy, int dz,
                        int hidden = 48);
  void init(nn::ParamStore& ps, Rng& rng) const;

  double estimate(const nn::ParamStore& ps, const Tensor& x, const Tensor& y, const Tensor& z,
                  Tensor* gx, Tensor* gy, Tensor* gz) const;
  double nll_grads(const nn::ParamStore& ps, const Tensor& x, const Tensor& y, const Tensor& z,
                   double* gbase) const;
};

Tensor concat_cols(const Tensor& a, const Tensor& b);

void check_batch(const Tensor& x, const Tensor& y);

}  // namespace jmpose::mi
