#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lgwae {

using Shape = std::vector<std::size_t>;

/// Raised when operand shapes do not conform; the message names the op and shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string shape_string(const Shape& shape);

/// Dense row-major tensor of doubles, rank 0..2.
///
/// Rank-1 tensors behave as a single row (1 x n) in matrix ops, rank-0 as 1 x 1.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double item() const;

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }
  std::vector<double>& storage() { return data_; }

  bool all_finite() const;
  void fill(double value);

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

namespace kernels {

/// out (+)= op(a) * op(b) where op transposes when the flag is set.
/// Every output element is accumulated over k in ascending order, so the
/// parallel and serial variants are bit-identical.
void matmul_serial(const Tensor& a, bool trans_a, const Tensor& b, bool trans_b, Tensor& out,
                   bool accumulate);
void matmul(const Tensor& a, bool trans_a, const Tensor& b, bool trans_b, Tensor& out,
            bool accumulate);

}  // namespace kernels

}  // namespace lgwae
