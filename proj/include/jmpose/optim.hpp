#pragma once

#include <cmath>

#include "jmpose/nn.hpp"

namespace jmpose {

/// Stepwise learning-rate schedule: stage k applies from decay_epochs[k-1]
/// onward. Stage values are stored verbatim so queried rates are exact.
struct LrSchedule {
  std::vector<double> stages = {1e-4, 1e-5, 1e-6, 1e-7};
  std::vector<int> decay_epochs = {5, 10, 15};

  double at_epoch(int epoch) const {
    size_t k = 0;
    while (k < decay_epochs.size() && epoch >= decay_epochs[k]) ++k;
    return stages[std::min(k, stages.size() - 1)];
  }
  void validate() const {
    if (stages.size() != decay_epochs.size() + 1)
      throw ConfigError("lr schedule: need one stage per decay epoch plus the initial rate");
    for (size_t i = 1; i < decay_epochs.size(); ++i)
      if (decay_epochs[i] <= decay_epochs[i - 1])
        throw ConfigError("lr schedule: decay epochs must increase");
  }
};

/// Decoupled weight-decay Adam over a flat parameter vector.
struct AdamW {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double weight_decay = 0.0;
  int64_t t = 0;
  std::vector<double> m, v;

  void ensure(size_t n) {
    if (m.size() != n) {
      m.assign(n, 0.0);
      v.assign(n, 0.0);
      t = 0;
    }
  }

  void step(std::vector<double>& w, const std::vector<double>& g, double lr) {
    ensure(w.size());
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1 * m[i] + (1 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1 - beta2) * g[i] * g[i];
      double mh = m[i] / bc1;
      double vh = v[i] / bc2;
      w[i] -= lr * (mh / (std::sqrt(vh) + eps) + weight_decay * w[i]);
    }
  }
};

}  // namespace jmpose
