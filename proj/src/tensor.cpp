#include "lgwae/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace lgwae {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void check_rank(const Shape& shape) {
  if (shape.size() > 2) throw ShapeError("tensor: rank > 2 unsupported " + shape_string(shape));
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_rank(shape_);
  data_.assign(product(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_rank(shape_);
  if (product(shape_) != data_.size()) {
    throw ShapeError("tensor: shape " + shape_string(shape_) + " does not hold " +
                     std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor(Shape{n}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("tensor: ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor(Shape{r, c}, std::move(data));
}

std::size_t Tensor::rows() const { return shape_.size() == 2 ? shape_[0] : 1; }

std::size_t Tensor::cols() const {
  if (shape_.size() == 2) return shape_[1];
  if (shape_.size() == 1) return shape_[0];
  return 1;
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item: tensor of shape " + shape_string(shape_) + " is not scalar");
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

namespace kernels {

namespace {

struct Dims {
  std::size_t m, k, n;
};

Dims check_matmul(const Tensor& a, bool trans_a, const Tensor& b, bool trans_b, const Tensor& out) {
  const std::size_t am = trans_a ? a.cols() : a.rows();
  const std::size_t ak = trans_a ? a.rows() : a.cols();
  const std::size_t bk = trans_b ? b.cols() : b.rows();
  const std::size_t bn = trans_b ? b.rows() : b.cols();
  if (ak != bk || out.rows() != am || out.cols() != bn) {
    throw ShapeError("matmul: shapes " + shape_string(a.shape()) + (trans_a ? "^T" : "") + " and " +
                     shape_string(b.shape()) + (trans_b ? "^T" : "") + " into " + shape_string(out.shape()));
  }
  return {am, ak, bn};
}

// One output row; k is always the outer accumulation index in ascending order.
inline void matmul_row(const Tensor& a, bool trans_a, const Tensor& b, bool trans_b, Tensor& out,
                       const Dims& d, std::size_t i, bool accumulate) {
  const double* A = a.data().data();
  const double* B = b.data().data();
  double* C = out.data().data() + i * d.n;
  const std::size_t lda = a.cols();
  const std::size_t ldb = b.cols();
  if (!accumulate) {
    for (std::size_t j = 0; j < d.n; ++j) C[j] = 0.0;
  }
  if (!trans_b) {
    for (std::size_t k = 0; k < d.k; ++k) {
      const double aik = trans_a ? A[k * lda + i] : A[i * lda + k];
      const double* brow = B + k * ldb;
      for (std::size_t j = 0; j < d.n; ++j) C[j] += aik * brow[j];
    }
  } else {
    for (std::size_t j = 0; j < d.n; ++j) {
      const double* brow = B + j * ldb;
      double acc = C[j];
      for (std::size_t k = 0; k < d.k; ++k) {
        const double aik = trans_a ? A[k * lda + i] : A[i * lda + k];
        acc += aik * brow[k];
      }
      C[j] = acc;
    }
  }
}

}  // namespace

void matmul_serial(const Tensor& a, bool trans_a, const Tensor& b, bool trans_b, Tensor& out,
                   bool accumulate) {
  const Dims d = check_matmul(a, trans_a, b, trans_b, out);
  for (std::size_t i = 0; i < d.m; ++i) matmul_row(a, trans_a, b, trans_b, out, d, i, accumulate);
}

void matmul(const Tensor& a, bool trans_a, const Tensor& b, bool trans_b, Tensor& out, bool accumulate) {
  const Dims d = check_matmul(a, trans_a, b, trans_b, out);
  const long long m = static_cast<long long>(d.m);
  [[maybe_unused]] const bool big = d.m * d.k * d.n > (1u << 16);
#pragma omp parallel for schedule(static) if (big)
  for (long long i = 0; i < m; ++i) {
    matmul_row(a, trans_a, b, trans_b, out, d, static_cast<std::size_t>(i), accumulate);
  }
}

}  // namespace kernels

}  // namespace lgwae
