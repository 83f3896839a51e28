#pragma once

#include <array>
#include <cassert>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace jmpose {

/// Raised for malformed configuration files / invalid option values.
/// Maps to exit code 2 at the CLI boundary.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when a computation produces non-finite values (diverged loss etc.).
/// Maps to exit code 3 at the CLI boundary.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Dense row-major tensor of doubles, up to 4 dimensions.
///
/// All model math runs in double so that analytic gradients can be checked
/// against central finite differences at tight tolerances.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, double value);

  const std::vector<int>& shape() const { return shape_; }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* ptr() { return data_.data(); }
  const double* ptr() const { return data_.data(); }
  std::vector<double>& raw() { return data_; }
  const std::vector<double>& raw() const { return data_; }

  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // Indexed access; shapes are trusted (ops validate at their boundaries).
  double& at(int i, int j) { return data_[static_cast<size_t>(i) * shape_[1] + j]; }
  double at(int i, int j) const { return data_[static_cast<size_t>(i) * shape_[1] + j]; }
  double& at(int c, int y, int x) {
    return data_[(static_cast<size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }
  double at(int c, int y, int x) const {
    return data_[(static_cast<size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }
  double& at(int o, int c, int y, int x) {
    return data_[((static_cast<size_t>(o) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }
  double at(int o, int c, int y, int x) const {
    return data_[((static_cast<size_t>(o) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }

  // Plane (last two dims) base pointer for channel c of a 3-d tensor.
  double* plane(int c) { return data_.data() + static_cast<size_t>(c) * shape_[1] * shape_[2]; }
  const double* plane(int c) const {
    return data_.data() + static_cast<size_t>(c) * shape_[1] * shape_[2];
  }

  void fill(double v);
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;
  double max_abs() const;

  Tensor& operator+=(const Tensor& o);
  Tensor& operator*=(double s);

 private:
  std::vector<int> shape_;
  std::vector<double> data_;
};

/// Counter-free xoshiro256++ PRNG with splitmix64 seeding.
///
/// Every random draw in the project goes through this generator: results are
/// a pure function of the seed, independent of platform library details, and
/// the four state words serialize into checkpoints for exact resume.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  /// Standard normal via a fresh Box-Muller pair (no cached spare, so the
  /// serialized state fully determines the stream).
  double normal();
  /// Uniform integer in [0, n).
  int uniform_int(int n);
  bool bernoulli(double p) { return uniform() < p; }

  std::array<uint64_t, 4> state() const { return s_; }
  void set_state(const std::array<uint64_t, 4>& s) { s_ = s; }

 private:
  std::array<uint64_t, 4> s_{};
};

/// Runs fn(i) for i in [0, n) on up to `threads` worker threads.
///
/// Work is split into contiguous slabs; callers get determinism by writing
/// only to per-index slots and reducing in index order afterwards.
void parallel_for(int64_t n, int threads, const std::function<void(int64_t)>& fn);

std::string format_index(const char* prefix, int index, int width);

}  // namespace jmpose
