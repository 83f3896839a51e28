#pragma once

#include <functional>
#include <string>

#include "jmpose/common.hpp"

namespace jmpose::nn {

/// Handle into a ParamStore: offset + shape of one named tensor.
struct Param {
  size_t off = 0;
  std::vector<int> shape;
  int64_t count = 0;
};

/// Flat parameter arena. All trainable values of a model live in one
/// contiguous vector, with a parallel gradient vector of the same layout;
/// backward passes may instead accumulate into any caller-provided buffer of
/// that layout (per-thread buffers reduce deterministically afterwards).
/// The flat layout also makes the optimizer, checkpointing and
/// finite-difference checks uniform.
class ParamStore {
 public:
  Param add(const std::string& name, std::vector<int> shape);

  int64_t total() const { return static_cast<int64_t>(w.size()); }
  void zero_grad() { std::fill(g.begin(), g.end(), 0.0); }
  std::vector<double> make_grad_buffer() const { return std::vector<double>(w.size(), 0.0); }

  double* wp(const Param& p) { return w.data() + p.off; }
  const double* wp(const Param& p) const { return w.data() + p.off; }

  struct Entry {
    std::string name;
    Param param;
  };

  std::vector<double> w;
  std::vector<double> g;
  std::vector<Entry> entries;
};

double he_scale(int fan_in);
void init_normal(double* dst, int64_t n, double stddev, Rng& rng);

/// 3x3-style 2-d convolution over (C,H,W) tensors, zero padding.
struct Conv2d {
  int in_ch = 0, out_ch = 0, ks = 3, stride = 1, pad = 1;
  Param w, b;

  Conv2d() = default;
  Conv2d(ParamStore& ps, const std::string& name, int in_c, int out_c, int k, int stride_ = 1,
         int pad_ = 1);

  int out_h(int h) const { return (h + 2 * pad - ks) / stride + 1; }
  int out_w(int w_) const { return (w_ + 2 * pad - ks) / stride + 1; }

  void init_he(ParamStore& ps, Rng& rng, double gain = 1.0) const;

  Tensor forward(const double* wbase, const Tensor& x) const;
  /// Accumulates parameter grads into gbase and returns grad w.r.t. x.
  Tensor backward(const double* wbase, const Tensor& x, const Tensor& gy, double* gbase) const;
};

/// Fully connected layer over (B, In) batches.
struct Linear {
  int in_dim = 0, out_dim = 0;
  Param w, b;  // w: (Out, In)

  Linear() = default;
  Linear(ParamStore& ps, const std::string& name, int in_d, int out_d);
  void init_he(ParamStore& ps, Rng& rng, double gain = 1.0) const;

  Tensor forward(const double* wbase, const Tensor& x) const;
  Tensor backward(const double* wbase, const Tensor& x, const Tensor& gy, double* gbase) const;
};

Tensor relu(const Tensor& x);
/// gx from the forward *output* (gradient is y > 0 ? gy : 0).
Tensor relu_backward(const Tensor& y, const Tensor& gy);
Tensor tanh_fwd(const Tensor& x);
Tensor tanh_backward(const Tensor& y, const Tensor& gy);
Tensor sigmoid(const Tensor& x);
Tensor sigmoid_backward(const Tensor& y, const Tensor& gy);

/// Row-wise softmax of an (N, M) matrix.
Tensor softmax_rows(const Tensor& s);
Tensor softmax_rows_backward(const Tensor& p, const Tensor& gp);

/// (C,H,W) -> (C) channel means.
Tensor global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(const std::vector<int>& x_shape, const Tensor& gc);

Tensor concat_channels(const Tensor& a, const Tensor& b);
void split_channels(const Tensor& ab, Tensor& ga, Tensor& gb);

// ---- finite-difference verification ----

struct GradCheckReport {
  double max_rel_err = 0;
  int64_t checked = 0;
  bool pass(double tol) const { return checked > 0 && max_rel_err < tol; }
};

double fd_rel_err(double analytic, double numeric);

/// Central finite differences on up to max_checks randomly chosen entries of
/// the store (loss() must recompute the scalar from current store values).
GradCheckReport check_param_grads(const std::function<double()>& loss, ParamStore& ps,
                                  const std::vector<double>& analytic, int64_t max_checks,
                                  Rng& rng, double h = 1e-5);

/// Same, perturbing a tensor input in place.
GradCheckReport check_tensor_grads(const std::function<double()>& loss, Tensor& x,
                                   const Tensor& analytic, int64_t max_checks, Rng& rng,
                                   double h = 1e-5);

}  // namespace jmpose::nn
