#pragma once

// Dense numeric kernel: row-major double tensors of rank 1 to 3, the
// elementwise nonlinearities used by the LSTM units, a portable seeded RNG
// and a central-difference gradient oracle.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "glstm/errors.hpp"

namespace glstm {

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ')';
  return os.str();
}

class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
    if (shape_.empty() || shape_.size() > 3) throw ShapeError("tensor rank must be 1..3");
    data_.assign(count(shape_), fill);
  }

  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_.empty() || shape_.size() > 3) throw ShapeError("tensor rank must be 1..3");
    if (data_.size() != count(shape_))
      throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                       shape_string(shape_));
  }

  static Tensor vector(std::initializer_list<double> v) { return Tensor({v.size()}, std::vector<double>(v)); }
  static Tensor vector(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor({n}, std::move(v));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  // Row of a matrix as a contiguous view.
  std::span<double> row(std::size_t i) { return std::span<double>(data_).subspan(i * shape_.at(1), shape_[1]); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(data_).subspan(i * shape_.at(1), shape_[1]);
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Tensor&) const = default;

 private:
  static std::size_t count(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
  }

  Shape shape_;
  std::vector<double> data_;
};

// Portable generator: the mt19937_64 stream is fixed by the C++ standard, and
// every derived quantity below is computed from raw 64-bit draws so that the
// same seed reproduces the same values on any conforming platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) {
    const double v = lo + (hi - lo) * uniform();
    return v < hi ? v : lo;
  }

  // Uniform integer in [0, n), unbiased by rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw Error("Rng::below: empty range");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
      x = next();
    } while (x >= limit);
    return x % n;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Independent child seed; splitmix64 finaliser over (seed, stream).
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace detail {

inline void require(bool ok, const char* op, const Shape& a, const Shape& b) {
  if (!ok) throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " + shape_string(b));
}

template <typename F>
Tensor map(const Tensor& v, F f) {
  Tensor out = v;
  for (double& x : out.data()) x = f(x);
  return out;
}

}  // namespace detail

inline Tensor sigmoid(const Tensor& v) { return detail::map(v, [](double x) { return sigmoid(x); }); }
inline Tensor tanh(const Tensor& v) { return detail::map(v, [](double x) { return std::tanh(x); }); }

inline Tensor hadamard(const Tensor& a, const Tensor& b) {
  detail::require(a.shape() == b.shape(), "hadamard", a.shape(), b.shape());
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

// out += M * v for a rows x cols row-major block.
inline void matvec_accumulate(std::span<const double> m, std::size_t rows, std::size_t cols,
                              std::span<const double> v, std::span<double> out) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = m.data() + r * cols;
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += row[c] * v[c];
    out[r] += s;
  }
}

// out += M^T * v.
inline void matvec_transposed_accumulate(std::span<const double> m, std::size_t rows, std::size_t cols,
                                         std::span<const double> v, std::span<double> out) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = m.data() + r * cols;
    const double vr = v[r];
    if (vr == 0.0) continue;
    for (std::size_t c = 0; c < cols; ++c) out[c] += row[c] * vr;
  }
}

// M += u v^T.
inline void outer_accumulate(std::span<const double> u, std::span<const double> v, std::span<double> m) {
  const std::size_t cols = v.size();
  for (std::size_t r = 0; r < u.size(); ++r) {
    const double ur = u[r];
    if (ur == 0.0) continue;
    double* row = m.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) row[c] += ur * v[c];
  }
}

inline Tensor matvec(const Tensor& m, const Tensor& v) {
  detail::require(m.rank() == 2 && v.rank() == 1 && m.dim(1) == v.dim(0), "matvec", m.shape(), v.shape());
  Tensor out({m.dim(0)});
  matvec_accumulate(m.data(), m.dim(0), m.dim(1), v.data(), out.data());
  return out;
}

inline Tensor outer(const Tensor& u, const Tensor& v) {
  detail::require(u.rank() == 1 && v.rank() == 1, "outer", u.shape(), v.shape());
  Tensor out({u.dim(0), v.dim(0)});
  outer_accumulate(u.data(), v.data(), out.data());
  return out;
}

// T x_T A = sum_k T[:,:,k] . A[:,k], for T of shape l x l x d and A of shape l x d.
inline Tensor tensor_dot(const Tensor& t, const Tensor& a) {
  detail::require(t.rank() == 3 && a.rank() == 2 && t.dim(1) == a.dim(0) && t.dim(2) == a.dim(1), "tensor_dot",
                  t.shape(), a.shape());
  const std::size_t rows = t.dim(0), cols = t.dim(1), depth = t.dim(2);
  Tensor out({rows});
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c)
      for (std::size_t k = 0; k < depth; ++k) s += t(r, c, k) * a(c, k);
    out[r] = s;
  }
  return out;
}

inline Tensor init_uniform(const Shape& shape, double lo, double hi, Rng& rng) {
  if (!(lo < hi)) throw Error("init_uniform: invalid range [" + std::to_string(lo) + ", " + std::to_string(hi) + ")");
  Tensor out(shape);
  for (double& x : out.data()) x = rng.uniform(lo, hi);
  return out;
}

// Central differences (f(t + eps e_i) - f(t - eps e_i)) / 2 eps for every coordinate.
inline Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& theta, double eps) {
  if (!(eps > 0)) throw Error("finite_diff_grad: eps must be positive");
  Tensor grad(theta.shape());
  Tensor probe = theta;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    probe[i] = theta[i] + eps;
    const double up = f(probe);
    probe[i] = theta[i] - eps;
    const double down = f(probe);
    probe[i] = theta[i];
    if (!std::isfinite(up) || !std::isfinite(down))
      throw Error("finite_diff_grad: non-finite function value at coordinate " + std::to_string(i));
    grad[i] = (up - down) / (2 * eps);
  }
  return grad;
}

// |a - b| scaled by the larger magnitude, with a floor so that coordinates
// whose true gradient is ~0 are compared absolutely.
inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace glstm
