// =============================================================
// tensor.hpp -- dense row-major double tensor + matrix kernels
// =============================================================
//
// A deliberately small tensor type: shape + flat data, always double,
// always row-major, no views, no broadcasting.  Everything the library
// needs is either an elementwise loop or one of three dense matrix
// products, and those three go through single-threaded OpenBLAS (the
// sgemm/dgemm kernels are the only part of the stack worth buying).
//
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"

#include <cblas-openblas.h>

extern "C" void openblas_set_num_threads(int);

namespace protodiv {

// Force OpenBLAS to one thread.  Reproducibility beats throughput here:
// multi-threaded reductions reorder floating point sums.
inline void ensure_single_thread_blas() {
  static const bool done = [] {
    openblas_set_num_threads(1);
    return true;
  }();
  (void)done;
}

class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(count(shape_), 0.0) {}

  Tensor(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != count(shape_))
      throw DimensionError("Tensor: data size does not match shape");
  }

  static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<std::size_t> shape, double v) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
  }

  static Tensor scalar(double v) { return Tensor({}, {v}); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }

  std::size_t rows() const {
    require_rank(2, "rows");
    return shape_[0];
  }
  std::size_t cols() const {
    require_rank(2, "cols");
    return shape_[1];
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

  // Scalar (rank-0 or single-element) value.
  double value() const {
    if (data_.size() != 1) throw DimensionError("Tensor::value: tensor is not scalar");
    return data_[0];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  std::string shape_str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << ']';
    return os.str();
  }

  // Throws NumericError naming `where` if any element is NaN or Inf.
  void check_finite(const std::string& where) const {
    for (double v : data_)
      if (!std::isfinite(v))
        throw NumericError("non-finite value in " + where);
  }

  static std::size_t count(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t s : shape) n *= s;
    return n;
  }

 private:
  void require_rank(std::size_t r, const char* what) const {
    if (shape_.size() != r)
      throw DimensionError(std::string("Tensor::") + what + ": expected rank " +
                           std::to_string(r) + ", have " + shape_str());
  }

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// ---------- elementwise helpers ----------

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

inline Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

inline Tensor scale(const Tensor& a, double s) {
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
  return out;
}

inline void axpy(Tensor& acc, const Tensor& x, double s = 1.0) {
  require_same_shape(acc, x, "axpy");
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += s * x[i];
}

inline double sum(const Tensor& a) {
  return std::accumulate(a.data(), a.data() + a.size(), 0.0);
}

// ---------- dense matrix products (OpenBLAS dgemm) ----------

// C[n,k] = A[n,m] * B[m,k]
inline Tensor matmul_nn(const Tensor& a, const Tensor& b) {
  ensure_single_thread_blas();
  const std::size_t n = a.rows(), m = a.cols();
  if (b.rows() != m)
    throw DimensionError("matmul_nn: inner dims " + a.shape_str() + " vs " + b.shape_str());
  const std::size_t k = b.cols();
  Tensor c({n, k});
  if (n && m && k)
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(n),
                static_cast<int>(k), static_cast<int>(m), 1.0, a.data(), static_cast<int>(m),
                b.data(), static_cast<int>(k), 0.0, c.data(), static_cast<int>(k));
  return c;
}

// C[n,k] = A[n,m] * B[k,m]^T
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  ensure_single_thread_blas();
  const std::size_t n = a.rows(), m = a.cols();
  if (b.cols() != m)
    throw DimensionError("matmul_nt: inner dims " + a.shape_str() + " vs " + b.shape_str());
  const std::size_t k = b.rows();
  Tensor c({n, k});
  if (n && m && k)
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, static_cast<int>(n),
                static_cast<int>(k), static_cast<int>(m), 1.0, a.data(), static_cast<int>(m),
                b.data(), static_cast<int>(m), 0.0, c.data(), static_cast<int>(k));
  return c;
}

// C[m,k] = A[n,m]^T * B[n,k]
inline Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  ensure_single_thread_blas();
  const std::size_t n = a.rows(), m = a.cols();
  if (b.rows() != n)
    throw DimensionError("matmul_tn: inner dims " + a.shape_str() + " vs " + b.shape_str());
  const std::size_t k = b.cols();
  Tensor c({m, k});
  if (n && m && k)
    cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, static_cast<int>(m),
                static_cast<int>(k), static_cast<int>(n), 1.0, a.data(), static_cast<int>(m),
                b.data(), static_cast<int>(k), 0.0, c.data(), static_cast<int>(k));
  return c;
}

// Transpose (used off the hot path).
inline Tensor transpose(const Tensor& a) {
  const std::size_t n = a.rows(), m = a.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out(j, i) = a(i, j);
  return out;
}

}  // namespace protodiv
